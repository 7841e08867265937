import { describe, expect, it } from "vitest";

import { shortcutFor, shortcutMap } from "../src/keyboard";

const SIXTEEN = [
  "whale", "ship", "debris", "oil", "whitecap", "zooplankton", "bird", "buoy",
  "aquaculture", "rock", "wave", "glint", "cloud", "land", "other", "unsure",
];

describe("keyboard shortcuts", () => {
  it("covers sixteen classes with digits then the qwerty row", () => {
    const map = shortcutMap(SIXTEEN);
    expect(map.size).toBe(16);
    expect(map.get("1")).toBe("whale");
    expect(map.get("9")).toBe("aquaculture");
    expect(map.get("0")).toBe("rock");
    expect(map.get("q")).toBe("wave");
    expect(map.get("y")).toBe("unsure");
  });

  it("keys are unique", () => {
    const map = shortcutMap(SIXTEEN);
    expect(new Set(map.keys()).size).toBe(16);
  });

  it("shortcutFor matches the map", () => {
    for (const cls of SIXTEEN) {
      const key = shortcutFor(SIXTEEN, cls);
      expect(key).not.toBeNull();
      expect(shortcutMap(SIXTEEN).get(key!)).toBe(cls);
    }
    expect(shortcutFor(SIXTEEN, "missing")).toBeNull();
  });

  it("handles shorter and longer class lists", () => {
    expect(shortcutMap(["a", "b"]).size).toBe(2);
    const many = Array.from({ length: 30 }, (_, i) => `c${i}`);
    expect(shortcutMap(many).size).toBe(20); // only the mapped prefix
  });
});
