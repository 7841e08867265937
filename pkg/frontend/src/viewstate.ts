import type { ChipMeta } from "./types";

// View state for the chip under review. Confidence/species are only
// meaningful while a whale label is being composed.
export type ViewState = {
  chip: ChipMeta | null;
  zoom: number;
  brightness: number; // additive offset
  contrast: number; // multiplicative gain, pivoting at mid-gray
  composingWhale: boolean;
  confidence: string | null;
  species: string;
  comment: string;
};

export function initialViewState(): ViewState {
  return {
    chip: null,
    zoom: 1,
    brightness: 0,
    contrast: 1,
    composingWhale: false,
    confidence: null,
    species: "",
    comment: "",
  };
}

export function withChip(state: ViewState, chip: ChipMeta): ViewState {
  // new chip resets the rendering controls and any whale sub-selection
  return { ...initialViewState(), chip };
}

export function setZoom(state: ViewState, zoom: number): ViewState {
  if (!(zoom > 0)) throw new Error(`zoom must be > 0, got ${zoom}`);
  return { ...state, zoom };
}

export function setContrast(state: ViewState, gain: number): ViewState {
  if (!(gain > 0)) throw new Error(`contrast gain must be > 0, got ${gain}`);
  return { ...state, contrast: gain };
}

export function setBrightness(state: ViewState, offset: number): ViewState {
  return { ...state, brightness: offset };
}

export function beginWhale(state: ViewState): ViewState {
  return { ...state, composingWhale: true, confidence: null };
}

export function cancelWhale(state: ViewState): ViewState {
  return { ...state, composingWhale: false, confidence: null, species: "" };
}

export function whaleControlsEnabled(state: ViewState): boolean {
  return state.composingWhale;
}
