// Pure RGBA compositing of one slice: grayscale image underneath, label
// fills for the refined mask, outlines for the automatic mask, stipple for
// the served error layer. Output is a flat rows*cols*4 buffer; the canvas
// layer just blits and upscales it.

import type { SliceShape } from "./grid";

export interface Rgb {
  r: number;
  g: number;
  b: number;
}

// category 0 is background and never painted; palette cycles past 6 classes
const PALETTE: readonly Rgb[] = [
  { r: 70, g: 130, b: 240 },  // class 1: blue
  { r: 250, g: 150, b: 40 },  // class 2: orange
  { r: 60, g: 200, b: 110 },  // class 3: green
  { r: 200, g: 80, b: 220 },  // class 4: purple
  { r: 240, g: 90, b: 90 },   // class 5: red
  { r: 60, g: 200, b: 220 },  // class 6: cyan
];

export function categoryColor(category: number): Rgb {
  if (category <= 0) {
    return { r: 128, g: 128, b: 128 };
  }
  return PALETTE[(category - 1) % PALETTE.length]!;
}

export function categoryCss(category: number): string {
  const { r, g, b } = categoryColor(category);
  return `rgb(${r}, ${g}, ${b})`;
}

export interface ComposeInput {
  shape: SliceShape;
  image: number[] | null;    // normalized floats
  window: { lo: number; hi: number };
  refined: number[] | null;  // label bytes, drawn as fills
  auto: number[] | null;     // label bytes, drawn as outlines
  error: number[] | null;    // served 0/1 layer, drawn as stipple
}

const FILL_ALPHA = 0.45;
const OUTLINE_ALPHA = 0.95;

function blend(data: Uint8ClampedArray, at: number, color: Rgb, alpha: number): void {
  data[at] = (1 - alpha) * data[at]! + alpha * color.r;
  data[at + 1] = (1 - alpha) * data[at + 1]! + alpha * color.g;
  data[at + 2] = (1 - alpha) * data[at + 2]! + alpha * color.b;
}

// outline = labeled cell with a 4-neighbor of a different label
function isBoundary(labels: number[], shape: SliceShape, row: number,
                    col: number): boolean {
  const { rows, cols } = shape;
  const here = labels[row * cols + col]!;
  const sides = [[row - 1, col], [row + 1, col], [row, col - 1], [row, col + 1]];
  for (const [r, c] of sides) {
    if (r! < 0 || r! >= rows || c! < 0 || c! >= cols) {
      return true;
    }
    if (labels[r! * cols + c!] !== here) {
      return true;
    }
  }
  return false;
}

export function composeSlice(input: ComposeInput) {
  const { rows, cols } = input.shape;
  const data = new Uint8ClampedArray(rows * cols * 4);
  const span = input.window.hi - input.window.lo || 1;
  for (let i = 0; i < rows * cols; i++) {
    const raw = input.image ? input.image[i]! : 0;
    const gray = Math.round(255 * (raw - input.window.lo) / span);
    data[4 * i] = gray;
    data[4 * i + 1] = gray;
    data[4 * i + 2] = gray;
    data[4 * i + 3] = 255;
  }
  if (input.refined) {
    for (let i = 0; i < rows * cols; i++) {
      const label = input.refined[i]!;
      if (label > 0) {
        blend(data, 4 * i, categoryColor(label), FILL_ALPHA);
      }
    }
  }
  if (input.auto) {
    for (let row = 0; row < rows; row++) {
      for (let col = 0; col < cols; col++) {
        const label = input.auto[row * cols + col]!;
        if (label > 0 && isBoundary(input.auto, input.shape, row, col)) {
          blend(data, 4 * (row * cols + col), categoryColor(label), OUTLINE_ALPHA);
        }
      }
    }
  }
  if (input.error) {
    for (let row = 0; row < rows; row++) {
      for (let col = 0; col < cols; col++) {
        const i = row * cols + col;
        if (input.error[i] && (row + col) % 2 === 0) {
          data[4 * i] = 255;
          data[4 * i + 1] = 40;
          data[4 * i + 2] = 40;
        }
      }
    }
  }
  return data;
}

// display window from the whole volume so scrubbing does not flicker
export function intensityWindow(voxels: ArrayLike<number>): { lo: number; hi: number } {
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < voxels.length; i++) {
    const v = voxels[i] as number;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!(lo < hi)) {
    return { lo: 0, hi: 1 };
  }
  return { lo, hi };
}
