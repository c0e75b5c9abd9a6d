export type RelationType =
  | "left-of"
  | "right-of"
  | "above"
  | "below"
  | "surrounding"
  | "inside";

export interface Relation {
  subject: number;
  predicate: RelationType;
  object: number;
}

export type AppearanceMode = "archetype" | "imported" | "random";

export interface AppearanceSelection {
  mode: AppearanceMode;
  ref: number | string | null;
}

export interface PlacedObject {
  id: number;
  className: string;
  x: number; // normalized center
  y: number;
  sizeLevel: number; // 1..10, rendered as one of ten font sizes
  appearance: AppearanceSelection;
}

export interface SceneGraphJson {
  objects: {
    id: number;
    class: string;
    location: { cell: number | null; size_bin: number | null };
    appearance: { mode: AppearanceMode; ref: number | string | null };
  }[];
  relations: Relation[];
}

export interface GenerateRequest {
  graph: SceneGraphJson;
  layout: { id: number; x: number; y: number; size_bin: number }[];
  resolution?: number;
  seed?: number;
}

export interface ObjectGeometry {
  id: number;
  box: [number, number, number, number];
  mask_png_base64: string;
}

export interface GenerateResponse {
  image_png_base64: string;
  objects: ObjectGeometry[];
  relations: Relation[];
  seed: number;
  elapsed_ms: number;
  model_version: string;
  resolution: number;
}

export interface ArchetypeListing {
  class: string;
  count: number;
  archetypes: { index: number; thumbnail_url: string }[];
}
