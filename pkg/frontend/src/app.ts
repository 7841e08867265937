import { ApiClient, ApiError } from "./api";
import { drawGraticule } from "./basemap";
import { shortcutFor, shortcutMap } from "./keyboard";
import { applyRendering, contrastPivotOffset, scaleBar, zoomNearest } from "./render";
import type { ChipMeta, RawImage } from "./types";
import { isDone } from "./types";
import {
  ViewState,
  beginWhale,
  cancelWhale,
  initialViewState,
  setBrightness,
  setContrast,
  setZoom,
  withChip,
} from "./viewstate";

export type ImageLoader = (url: string) => Promise<RawImage>;

export type AppDeps = {
  api: ApiClient;
  loadImage: ImageLoader;
  storage: Pick<Storage, "getItem" | "setItem">;
};

const LABELER_KEY = "seaspot.labeler";
const MAP_SIZE = 220;
const MAP_METERS_PER_PX = 4;

/** The single-page labeling app. All DOM lives under the given root. */
export class App {
  state: ViewState = initialViewState();
  raw: RawImage | null = null;
  posting = false;
  classes: string[] = [];
  confidenceLevels: string[] = [];
  lastDrawn: RawImage | null = null;

  private deps: AppDeps;
  private root: HTMLElement;
  private els!: {
    gate: HTMLElement;
    gateInput: HTMLInputElement;
    main: HTMLElement;
    canvas: HTMLCanvasElement;
    mapCanvas: HTMLCanvasElement;
    scalebarLine: HTMLElement;
    scalebarLabel: HTMLElement;
    meta: HTMLElement;
    classButtons: HTMLElement;
    confidencePanel: HTMLElement;
    species: HTMLInputElement;
    comment: HTMLInputElement;
    error: HTMLElement;
    done: HTMLElement;
    zoom: HTMLInputElement;
    brightness: HTMLInputElement;
    contrast: HTMLInputElement;
  };

  constructor(root: HTMLElement, deps: AppDeps) {
    this.root = root;
    this.deps = deps;
  }

  labeler(): string {
    return this.deps.storage.getItem(LABELER_KEY) ?? "";
  }

  async start(): Promise<void> {
    this.buildDom();
    if (this.labeler()) {
      await this.run();
    } else {
      this.els.gate.style.display = "block";
      this.els.main.style.display = "none";
    }
  }

  /** Labeler id is entered once and kept in local storage. */
  async submitLabelerId(): Promise<void> {
    const id = this.els.gateInput.value.trim();
    if (!id) return;
    this.deps.storage.setItem(LABELER_KEY, id);
    await this.run();
  }

  private async run(): Promise<void> {
    this.els.gate.style.display = "none";
    this.els.main.style.display = "block";
    const cfg = await this.deps.api.classes();
    this.classes = cfg.classes;
    this.confidenceLevels = cfg.confidence_levels;
    this.buildClassButtons();
    await this.loadNext();
  }

  async loadNext(): Promise<void> {
    this.hideError();
    const resp = await this.deps.api.nextChip(this.labeler());
    if (isDone(resp)) {
      await this.showDone();
      return;
    }
    this.state = withChip(this.state, resp);
    this.raw = await this.deps.loadImage(this.deps.api.chipImageUrl(resp.image_url));
    this.syncControls();
    this.renderChip();
    this.renderMetadata(resp);
    this.renderBasemap(resp);
    this.els.done.style.display = "none";
  }

  /** Re-render from the cached pixels; never touches the network. */
  renderChip(): void {
    if (!this.raw) return;
    const offset = contrastPivotOffset(this.state.contrast, this.state.brightness);
    const adjusted = applyRendering(this.raw.data, this.state.contrast, offset);
    const img = zoomNearest({ data: adjusted, width: this.raw.width, height: this.raw.height }, this.state.zoom);
    this.lastDrawn = img;
    this.drawToCanvas(img);
    this.renderScaleBar();
  }

  private drawToCanvas(img: RawImage): void {
    const canvas = this.els.canvas;
    canvas.width = img.width;
    canvas.height = img.height;
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    let pixels: ImageData | RawImage = img;
    if (typeof ImageData !== "undefined") {
      pixels = new ImageData(new Uint8ClampedArray(img.data), img.width, img.height);
    }
    (ctx as CanvasRenderingContext2D).putImageData(pixels as ImageData, 0, 0);
  }

  private renderScaleBar(): void {
    if (!this.state.chip) return;
    const bar = scaleBar(this.state.chip.resolution_m, this.state.zoom);
    this.els.scalebarLine.style.width = `${bar.px}px`;
    this.els.scalebarLabel.textContent = bar.label;
  }

  private renderMetadata(chip: ChipMeta): void {
    this.els.meta.innerHTML = "";
    const rows: Array<[string, string]> = [
      ["chip", chip.chip_id],
      ["lon", chip.lon.toFixed(2)],
      ["lat", chip.lat.toFixed(2)],
      ["date", chip.date ?? "unknown"],
      ["scene", chip.scene_id],
      ["resolution", `${chip.resolution_m} m/px`],
    ];
    for (const [key, value] of rows) {
      const div = document.createElement("div");
      div.className = "meta-row";
      div.dataset.key = key;
      div.textContent = `${key}: ${value}`;
      this.els.meta.appendChild(div);
    }
  }

  private renderBasemap(chip: ChipMeta): void {
    const ctx = this.els.mapCanvas.getContext("2d");
    if (!ctx) return;
    drawGraticule(ctx, MAP_SIZE, MAP_SIZE, chip.lon, chip.lat, MAP_METERS_PER_PX);
  }

  private async showDone(): Promise<void> {
    this.state = initialViewState();
    this.raw = null;
    this.els.done.style.display = "block";
    this.els.done.innerHTML = "";
    const h = document.createElement("h2");
    h.textContent = "All chips labeled — thank you!";
    this.els.done.appendChild(h);
    try {
      const prog = await this.deps.api.progress();
      const stats = document.createElement("div");
      stats.id = "done-stats";
      const perClass = Object.entries(prog.per_class)
        .map(([cls, n]) => `${cls}: ${n}`)
        .join(", ");
      stats.textContent = `${prog.labels} labels over ${prog.total} chips (${prog.retired} retired). ${perClass}`;
      this.els.done.appendChild(stats);
    } catch {
      // progress is decoration on the done screen; ignore failures
    }
  }

  // -- labeling flow ------------------------------------------------------

  classClicked(cls: string): void {
    if (this.posting || !this.state.chip) return;
    if (cls === "whale") {
      this.state = beginWhale(this.state);
      this.syncWhalePanel();
      return;
    }
    this.state = cancelWhale(this.state);
    this.syncWhalePanel();
    void this.post({ class: cls });
  }

  confidenceClicked(level: string): void {
    if (this.posting || !this.state.chip || !this.state.composingWhale) return;
    this.state = { ...this.state, confidence: level };
    void this.post({
      class: "whale",
      confidence: level,
      species: this.els.species.value.trim() || undefined,
    });
  }

  private async post(body: { class: string; confidence?: string; species?: string }): Promise<void> {
    if (this.posting || !this.state.chip) return;
    this.posting = true;
    this.setButtonsEnabled(false);
    try {
      await this.deps.api.submitLabel({
        chip_id: this.state.chip.chip_id,
        labeler: this.labeler(),
        comment: this.els.comment.value.trim() || undefined,
        ...body,
      });
      this.els.comment.value = "";
      this.els.species.value = "";
      this.posting = false;
      this.setButtonsEnabled(true);
      await this.loadNext();
    } catch (err) {
      this.posting = false;
      this.setButtonsEnabled(true);
      // rejected submission: keep showing the same chip with the message
      this.showError(err instanceof ApiError ? err.message : `submission failed: ${err}`);
      this.state = cancelWhale(this.state);
      this.syncWhalePanel();
      this.renderChip();
    }
  }

  // -- rendering controls --------------------------------------------------

  zoomChanged(zoom: number): void {
    this.state = setZoom(this.state, zoom);
    this.renderChip();
  }

  brightnessChanged(offset: number): void {
    this.state = setBrightness(this.state, offset);
    this.renderChip();
  }

  contrastChanged(gain: number): void {
    this.state = setContrast(this.state, gain);
    this.renderChip();
  }

  resetRendering(): void {
    this.state = { ...this.state, zoom: 1, brightness: 0, contrast: 1 };
    this.syncControls();
    this.renderChip();
  }

  // -- DOM ----------------------------------------------------------------

  private buildDom(): void {
    this.root.innerHTML = "";

    const gate = el("div", { id: "labeler-gate" });
    const gateLabel = el("label", {}, "labeler id: ");
    const gateInput = el("input", { id: "labeler-input", type: "text" }) as HTMLInputElement;
    const gateButton = el("button", { id: "labeler-submit" }, "start");
    gateButton.addEventListener("click", () => void this.submitLabelerId());
    gateLabel.appendChild(gateInput);
    gate.append(gateLabel, gateButton);

    const main = el("div", { id: "labeler-main" });

    const viewer = el("div", { id: "viewer" });
    const canvas = el("canvas", { id: "chip-canvas" }) as HTMLCanvasElement;
    const scalebar = el("div", { id: "scalebar" });
    const scalebarLine = el("div", { id: "scalebar-line" });
    const scalebarLabel = el("span", { id: "scalebar-label" });
    scalebar.append(scalebarLine, scalebarLabel);

    const controls = el("div", { id: "render-controls" });
    const zoom = slider("zoom", "0.5", "8", "0.5", "1");
    const brightness = slider("brightness", "-128", "128", "1", "0");
    const contrast = slider("contrast", "0.2", "4", "0.1", "1");
    zoom.addEventListener("input", () => this.zoomChanged(Number(zoom.value)));
    brightness.addEventListener("input", () => this.brightnessChanged(Number(brightness.value)));
    contrast.addEventListener("input", () => this.contrastChanged(Number(contrast.value)));
    const reset = el("button", { id: "reset-rendering" }, "reset view");
    reset.addEventListener("click", () => this.resetRendering());
    controls.append(
      labeled("zoom", zoom),
      labeled("brightness", brightness),
      labeled("contrast", contrast),
      reset,
    );
    viewer.append(canvas, scalebar, controls);

    const side = el("div", { id: "side" });
    const meta = el("div", { id: "metadata" });
    const mapCanvas = el("canvas", { id: "basemap-canvas" }) as HTMLCanvasElement;
    mapCanvas.width = MAP_SIZE;
    mapCanvas.height = MAP_SIZE;
    const classButtons = el("div", { id: "class-buttons" });
    const confidencePanel = el("div", { id: "confidence-panel" });
    confidencePanel.style.display = "none";
    const species = el("input", { id: "species-input", type: "text", placeholder: "species (whale only)" }) as HTMLInputElement;
    species.disabled = true;
    const comment = el("input", { id: "comment-input", type: "text", placeholder: "comment" }) as HTMLInputElement;
    const error = el("div", { id: "error-banner" });
    error.style.display = "none";
    const done = el("div", { id: "done-screen" });
    done.style.display = "none";
    side.append(meta, mapCanvas, classButtons, confidencePanel, species, comment, error, done);

    main.append(viewer, side);
    this.root.append(gate, main);

    this.els = {
      gate,
      gateInput,
      main,
      canvas,
      mapCanvas,
      scalebarLine,
      scalebarLabel,
      meta,
      classButtons,
      confidencePanel,
      species,
      comment,
      error,
      done,
      zoom,
      brightness,
      contrast,
    };

    document.addEventListener("keydown", (ev) => this.onKeydown(ev));
  }

  /** Class buttons come from the server's configured list, never hardcoded. */
  private buildClassButtons(): void {
    this.els.classButtons.innerHTML = "";
    for (const cls of this.classes) {
      const key = shortcutFor(this.classes, cls);
      const button = el("button", { "data-class": cls }, key ? `${cls} [${key}]` : cls);
      button.addEventListener("click", () => this.classClicked(cls));
      this.els.classButtons.appendChild(button);
    }
    this.els.confidencePanel.innerHTML = "";
    for (const level of this.confidenceLevels) {
      const button = el("button", { "data-confidence": level }, level);
      button.addEventListener("click", () => this.confidenceClicked(level));
      this.els.confidencePanel.appendChild(button);
    }
  }

  private onKeydown(ev: KeyboardEvent): void {
    const target = ev.target as HTMLElement | null;
    if (target && (target.tagName === "INPUT" || target.tagName === "TEXTAREA")) return;
    const cls = shortcutMap(this.classes).get(ev.key);
    if (cls) this.classClicked(cls);
  }

  private syncWhalePanel(): void {
    const composing = this.state.composingWhale;
    this.els.confidencePanel.style.display = composing ? "block" : "none";
    this.els.species.disabled = !composing;
  }

  private syncControls(): void {
    this.els.zoom.value = String(this.state.zoom);
    this.els.brightness.value = String(this.state.brightness);
    this.els.contrast.value = String(this.state.contrast);
    this.syncWhalePanel();
  }

  private setButtonsEnabled(enabled: boolean): void {
    const buttons = this.els.classButtons.querySelectorAll("button");
    buttons.forEach((b) => ((b as HTMLButtonElement).disabled = !enabled));
    const conf = this.els.confidencePanel.querySelectorAll("button");
    conf.forEach((b) => ((b as HTMLButtonElement).disabled = !enabled));
  }

  private showError(message: string): void {
    this.els.error.textContent = message;
    this.els.error.style.display = "block";
  }

  private hideError(): void {
    this.els.error.style.display = "none";
    this.els.error.textContent = "";
  }
}

function el(tag: string, attrs: Record<string, string> = {}, text?: string): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text) node.textContent = text;
  return node;
}

function slider(id: string, min: string, max: string, step: string, value: string): HTMLInputElement {
  const input = el("input", { id: `${id}-slider`, type: "range", min, max, step, value }) as HTMLInputElement;
  return input;
}

function labeled(name: string, input: HTMLElement): HTMLElement {
  const wrap = el("label", { class: `control-${name}` }, `${name} `);
  wrap.appendChild(input);
  return wrap;
}
