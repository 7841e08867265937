import { ApiClient } from "./api";
import { App } from "./app";
import type { RawImage } from "./types";

/** Fetch and decode a chip PNG into raw RGBA pixels. */
async function loadImagePixels(url: string): Promise<RawImage> {
  const response = await fetch(url);
  if (!response.ok) throw new Error(`chip image failed: ${response.status}`);
  const bitmap = await createImageBitmap(await response.blob());
  const canvas = document.createElement("canvas");
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas unavailable");
  ctx.drawImage(bitmap, 0, 0);
  const img = ctx.getImageData(0, 0, bitmap.width, bitmap.height);
  return { data: img.data, width: img.width, height: img.height };
}

const root = document.getElementById("app");
if (root) {
  const app = new App(root, {
    api: new ApiClient(),
    loadImage: loadImagePixels,
    storage: window.localStorage,
  });
  void app.start();
}
