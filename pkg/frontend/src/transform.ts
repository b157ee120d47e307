// Map <-> screen coordinate transforms. The canvas shows the grid with a
// uniform scale, origin at the bottom-left (world y grows upward, screen y
// grows downward).

import { GridMeta } from "./envelope.js";

export interface MapTransform {
  scale: number; // pixels per meter
  offsetX: number; // pixels
  offsetY: number;
  worldW: number; // meters
  worldH: number;
  origin: [number, number];
}

export function fitTransform(meta: GridMeta, canvasW: number, canvasH: number): MapTransform {
  const worldW = meta.width * meta.resolution;
  const worldH = meta.height * meta.resolution;
  const scale = Math.min(canvasW / worldW, canvasH / worldH);
  return {
    scale,
    offsetX: (canvasW - worldW * scale) / 2,
    offsetY: (canvasH - worldH * scale) / 2,
    worldW,
    worldH,
    origin: meta.origin,
  };
}

export function worldToPixel(t: MapTransform, wx: number, wy: number): [number, number] {
  const px = t.offsetX + (wx - t.origin[0]) * t.scale;
  const py = t.offsetY + (t.worldH - (wy - t.origin[1])) * t.scale;
  return [px, py];
}

export function pixelToWorld(t: MapTransform, px: number, py: number): [number, number] {
  const wx = t.origin[0] + (px - t.offsetX) / t.scale;
  const wy = t.origin[1] + t.worldH - (py - t.offsetY) / t.scale;
  return [wx, wy];
}

export function decodeCells(cellsB64: string): Uint8Array {
  const raw = atob(cellsB64);
  const out = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) out[i] = raw.charCodeAt(i);
  return out;
}

export const CELL_COLORS: Record<number, string> = {
  0: "#2b2b33", // unknown
  1: "#d8d8e0", // free
  2: "#11111a", // occupied
};
