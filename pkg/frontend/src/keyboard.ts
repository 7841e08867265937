// Keyboard shortcuts for the class buttons: digits 1-9, then 0, then the
// qwerty row — enough for sixteen classes without touching the mouse.
const SHORTCUT_KEYS = ["1", "2", "3", "4", "5", "6", "7", "8", "9", "0", "q", "w", "e", "r", "t", "y", "u", "i", "o", "p"];

export function shortcutMap(classes: string[]): Map<string, string> {
  const map = new Map<string, string>();
  classes.slice(0, SHORTCUT_KEYS.length).forEach((cls, i) => {
    map.set(SHORTCUT_KEYS[i], cls);
  });
  return map;
}

export function shortcutFor(classes: string[], cls: string): string | null {
  const i = classes.indexOf(cls);
  return i >= 0 && i < SHORTCUT_KEYS.length ? SHORTCUT_KEYS[i] : null;
}
