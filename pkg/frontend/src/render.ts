// Pure pixel transforms for the chip viewer. Everything here is a plain
// function of typed arrays so rendering stays a view concern: resetting the
// controls and re-applying to the original pixels reproduces the original
// display bit for bit.

import type { RawImage } from "./types";

const MIDPOINT = 128;

export const clamp8 = (v: number): number => Math.max(0, Math.min(255, v));

/** displayed = clamp(gain * raw + offset), alpha untouched. */
export function applyRendering(src: Uint8ClampedArray, gain: number, offset: number): Uint8ClampedArray {
  const out = new Uint8ClampedArray(src.length);
  for (let i = 0; i < src.length; i += 4) {
    out[i] = clamp8(Math.round(gain * src[i] + offset));
    out[i + 1] = clamp8(Math.round(gain * src[i + 1] + offset));
    out[i + 2] = clamp8(Math.round(gain * src[i + 2] + offset));
    out[i + 3] = src[i + 3];
  }
  return out;
}

/**
 * Offset that makes the contrast control pivot about mid-gray: gain alone
 * leaves the midpoint fixed (below it darkens, above brightens) and the
 * brightness slider adds on top.
 */
export function contrastPivotOffset(gain: number, brightness: number): number {
  return brightness + MIDPOINT * (1 - gain);
}

/** Nearest-neighbor zoom; preserves hard pixel edges. zoom must be > 0. */
export function zoomNearest(img: RawImage, zoom: number): RawImage {
  if (!(zoom > 0)) throw new Error(`zoom must be > 0, got ${zoom}`);
  const w = Math.max(1, Math.round(img.width * zoom));
  const h = Math.max(1, Math.round(img.height * zoom));
  const out = new Uint8ClampedArray(w * h * 4);
  for (let y = 0; y < h; y++) {
    const sy = Math.min(img.height - 1, Math.floor(y / zoom));
    for (let x = 0; x < w; x++) {
      const sx = Math.min(img.width - 1, Math.floor(x / zoom));
      const si = (sy * img.width + sx) * 4;
      const di = (y * w + x) * 4;
      out[di] = img.data[si];
      out[di + 1] = img.data[si + 1];
      out[di + 2] = img.data[si + 2];
      out[di + 3] = img.data[si + 3];
    }
  }
  return { data: out, width: w, height: h };
}

const NICE_METERS = [1, 2, 3, 5];

/**
 * Pick a round-number scale bar: the largest 1/2/3/5 x 10^k meter length
 * whose on-screen width (at the given m/px resolution and zoom) fits
 * maxPx. At 0.3 m/px and zoom 1 this yields 30 m over 100 px.
 */
export function scaleBar(resolutionM: number, zoom: number, maxPx = 120): { px: number; label: string } {
  if (!(resolutionM > 0)) throw new Error(`resolution must be > 0, got ${resolutionM}`);
  const pxPerMeter = zoom / resolutionM;
  let best = { px: 1, label: "1 m" };
  for (let k = -2; k <= 6; k++) {
    for (const n of NICE_METERS) {
      const meters = n * Math.pow(10, k);
      const px = meters * pxPerMeter;
      if (px <= maxPx && px > best.px) {
        best = { px, label: meters >= 1000 ? `${meters / 1000} km` : `${meters} m` };
      }
    }
  }
  return { px: Math.round(best.px), label: best.label };
}
