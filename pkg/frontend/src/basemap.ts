// Location context next to the chip. Offline mode (the default) draws a
// plain graticule around the chip coordinate so the UI works with no
// external tile provider; a slippy-tile URL template can be configured for
// deployments whose coordinates are WGS84 lon/lat.

export type BasemapConfig = {
  tileUrl?: string; // e.g. "https://tiles.example/{z}/{x}/{y}.png"
  zoom?: number;
};

export function tileForLonLat(lon: number, lat: number, z: number): { x: number; y: number; z: number } {
  const n = Math.pow(2, z);
  const x = Math.floor(((lon + 180) / 360) * n);
  const latRad = (lat * Math.PI) / 180;
  const y = Math.floor(((1 - Math.log(Math.tan(latRad) + 1 / Math.cos(latRad)) / Math.PI) / 2) * n);
  return { x, y, z };
}

export function tileUrlFor(template: string, lon: number, lat: number, z: number): string {
  const t = tileForLonLat(lon, lat, z);
  return template.replace("{z}", String(t.z)).replace("{x}", String(t.x)).replace("{y}", String(t.y));
}

/** Grid spacing in meters that keeps 4-8 graticule lines visible. */
export function graticuleSpacing(widthPx: number, metersPerPx: number): number {
  const targetMeters = (widthPx * metersPerPx) / 5;
  const pow = Math.pow(10, Math.floor(Math.log10(Math.max(targetMeters, 1e-9))));
  for (const n of [1, 2, 5, 10]) {
    if (n * pow >= targetMeters) return n * pow;
  }
  return 10 * pow;
}

/**
 * Draw the offline graticule: labeled grid lines around the marker, which
 * sits exactly at the chip coordinate in the canvas center.
 */
export function drawGraticule(
  ctx: CanvasRenderingContext2D,
  widthPx: number,
  heightPx: number,
  lon: number,
  lat: number,
  metersPerPx: number,
): void {
  ctx.clearRect(0, 0, widthPx, heightPx);
  ctx.fillStyle = "#0b2740";
  ctx.fillRect(0, 0, widthPx, heightPx);
  const spacing = graticuleSpacing(widthPx, metersPerPx);
  ctx.strokeStyle = "#27506f";
  ctx.fillStyle = "#7fa8c9";
  ctx.font = "10px sans-serif";
  const cx = widthPx / 2;
  const cy = heightPx / 2;
  // vertical lines at round multiples of the spacing
  const firstX = Math.ceil((lon - cx * metersPerPx) / spacing) * spacing;
  for (let m = firstX; m <= lon + cx * metersPerPx; m += spacing) {
    const px = cx + (m - lon) / metersPerPx;
    ctx.beginPath();
    ctx.moveTo(px, 0);
    ctx.lineTo(px, heightPx);
    ctx.stroke();
    ctx.fillText(String(Math.round(m)), px + 2, heightPx - 4);
  }
  const firstY = Math.ceil((lat - cy * metersPerPx) / spacing) * spacing;
  for (let m = firstY; m <= lat + cy * metersPerPx; m += spacing) {
    const py = cy - (m - lat) / metersPerPx;
    ctx.beginPath();
    ctx.moveTo(0, py);
    ctx.lineTo(widthPx, py);
    ctx.stroke();
    ctx.fillText(String(Math.round(m)), 2, py - 2);
  }
  // marker at the chip coordinate
  ctx.fillStyle = "#ff5c5c";
  ctx.beginPath();
  ctx.arc(cx, cy, 5, 0, 2 * Math.PI);
  ctx.fill();
  ctx.strokeStyle = "#ffffff";
  ctx.stroke();
}
