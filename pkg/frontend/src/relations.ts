// Client-side mirror of the server's placement rules. The server re-derives
// relations on every generate call; this copy only feeds the live scene-graph
// pane, and the integration fixtures pin both sides to identical outputs.

import type { Relation, RelationType } from "./types";

export const GRID_SIDE = 5;
export const NUM_SIZE_BINS = 10;
export const NESTING_CENTER_DIST = 0.15;
export const NESTING_SIZE_GAP = 2;
export const AXIS_TIE_EPS = 1e-9;

export function quantizeLocation(x: number, y: number): number {
  if (x < 0 || x > 1 || y < 0 || y > 1) {
    throw new Error(`coordinates out of range: (${x}, ${y})`);
  }
  const col = Math.min(Math.floor(x * GRID_SIDE), GRID_SIDE - 1);
  const row = Math.min(Math.floor(y * GRID_SIDE), GRID_SIDE - 1);
  return row * GRID_SIDE + col;
}

export function quantizeSize(sizeFraction: number): number {
  if (sizeFraction < 0 || sizeFraction > 1) {
    throw new Error(`size fraction out of range: ${sizeFraction}`);
  }
  return Math.min(Math.floor(sizeFraction * NUM_SIZE_BINS), NUM_SIZE_BINS - 1);
}

export interface Placed {
  id: number;
  x: number;
  y: number;
  sizeBin: number;
  insertionRank: number;
}

function pairPredicate(dx: number, dy: number, sizeGap: number, dist: number): RelationType {
  if (dist < NESTING_CENTER_DIST && Math.abs(sizeGap) >= NESTING_SIZE_GAP) {
    return sizeGap > 0 ? "surrounding" : "inside";
  }
  if (Math.abs(dx) >= Math.abs(dy) - AXIS_TIE_EPS) {
    return dx > 0 ? "left-of" : "right-of";
  }
  return dy > 0 ? "above" : "below";
}

// Chain policy: each object connects to its insertion predecessor, plus any
// nested pair; the earlier-inserted object is always the subject.
export function inferRelations(placed: Placed[]): Relation[] {
  const byRank = [...placed].sort((a, b) => a.insertionRank - b.insertionRank);
  const relations: Relation[] = [];
  for (let a = 0; a < byRank.length; a++) {
    for (let b = a + 1; b < byRank.length; b++) {
      const sub = byRank[a];
      const obj = byRank[b];
      const dx = obj.x - sub.x;
      const dy = obj.y - sub.y;
      const dist = Math.hypot(dx, dy);
      const nested =
        dist < NESTING_CENTER_DIST &&
        Math.abs(sub.sizeBin - obj.sizeBin) >= NESTING_SIZE_GAP;
      if (b !== a + 1 && !nested) {
        continue;
      }
      relations.push({
        subject: sub.id,
        predicate: pairPredicate(dx, dy, sub.sizeBin - obj.sizeBin, dist),
        object: obj.id,
      });
    }
  }
  return relations;
}
