export type ChipMeta = {
  chip_id: string;
  lon: number;
  lat: number;
  date: string | null;
  scene_id: string;
  resolution_m: number;
  image_url: string;
};

export type NextResponse = ChipMeta | { done: true };

export type ClassConfig = {
  classes: string[];
  confidence_levels: string[];
};

export type ProgressInfo = {
  total: number;
  retired: number;
  labels: number;
  per_class: Record<string, number>;
  mean_duration_s: Record<string, number>;
};

export type LabelPost = {
  chip_id: string;
  labeler: string;
  class: string;
  species?: string;
  confidence?: string;
  comment?: string;
};

export type RawImage = {
  data: Uint8ClampedArray; // RGBA
  width: number;
  height: number;
};

export const isDone = (r: NextResponse): r is { done: true } =>
  (r as { done?: boolean }).done === true;
