// Layout-panel state: placed objects in insertion order plus their
// appearance selections. Every mutation returns the inferred relations so
// the scene-graph pane can update in lockstep.

import { inferRelations, quantizeLocation } from "./relations";
import type {
  AppearanceSelection,
  PlacedObject,
  Relation,
  SceneGraphJson,
} from "./types";

export interface SessionDoc {
  objects: PlacedObject[];
  nextId: number;
}

export class PanelState {
  objects: PlacedObject[] = []; // insertion order
  private nextId = 0;

  addObject(
    className: string,
    x: number,
    y: number,
    sizeLevel = 5,
    appearance: AppearanceSelection = { mode: "random", ref: null },
  ): PlacedObject {
    const placed: PlacedObject = {
      id: this.nextId++,
      className,
      x,
      y,
      sizeLevel: clampLevel(sizeLevel),
      appearance,
    };
    this.objects.push(placed);
    return placed;
  }

  dragObject(id: number, x: number, y: number): void {
    const obj = this.get(id);
    obj.x = clamp01(x);
    obj.y = clamp01(y);
  }

  resizeObject(id: number, sizeLevel: number): void {
    this.get(id).sizeLevel = clampLevel(sizeLevel);
  }

  replaceAppearance(id: number, appearance: AppearanceSelection): void {
    this.get(id).appearance = appearance;
  }

  removeObject(id: number): void {
    const idx = this.objects.findIndex((o) => o.id === id);
    if (idx < 0) throw new Error(`unknown object id ${id}`);
    this.objects.splice(idx, 1);
  }

  get(id: number): PlacedObject {
    const obj = this.objects.find((o) => o.id === id);
    if (!obj) throw new Error(`unknown object id ${id}`);
    return obj;
  }

  relations(): Relation[] {
    return inferRelations(
      this.objects.map((o, rank) => ({
        id: o.id,
        x: o.x,
        y: o.y,
        sizeBin: o.sizeLevel - 1,
        insertionRank: rank,
      })),
    );
  }

  toSceneGraph(): SceneGraphJson {
    return {
      objects: this.objects.map((o) => ({
        id: o.id,
        class: o.className,
        location: {
          cell: quantizeLocation(o.x, o.y),
          size_bin: o.sizeLevel - 1,
        },
        appearance: { mode: o.appearance.mode, ref: o.appearance.ref },
      })),
      relations: this.relations(),
    };
  }

  toLayout(): { id: number; x: number; y: number; size_bin: number }[] {
    return this.objects.map((o) => ({
      id: o.id,
      x: o.x,
      y: o.y,
      size_bin: o.sizeLevel - 1,
    }));
  }

  toSessionDoc(): SessionDoc {
    return {
      objects: this.objects.map((o) => ({ ...o, appearance: { ...o.appearance } })),
      nextId: this.nextId,
    };
  }

  static fromSessionDoc(doc: SessionDoc): PanelState {
    const state = new PanelState();
    state.objects = doc.objects.map((o) => ({ ...o, appearance: { ...o.appearance } }));
    state["nextId"] = doc.nextId;
    return state;
  }
}

function clamp01(v: number): number {
  return Math.min(1, Math.max(0, v));
}

function clampLevel(level: number): number {
  return Math.min(10, Math.max(1, Math.round(level)));
}
