// Slice geometry for x-fastest voxel grids, matching the service's slice
// conventions: the faster of the two in-plane axes is the column axis.
//   axis z -> values[y][x], axis y -> values[z][x], axis x -> values[z][y]

import type { Extents } from "./codec";

export type Axis = "x" | "y" | "z";
export type Voxel = readonly [number, number, number];

export const AXES: readonly Axis[] = ["x", "y", "z"];

const AXIS_DIM: Record<Axis, number> = { x: 0, y: 1, z: 2 };

export function axisExtent(extents: Extents, axis: Axis): number {
  return extents[AXIS_DIM[axis]]!;
}

export interface SliceShape {
  rows: number;
  cols: number;
}

export function sliceShape(extents: Extents, axis: Axis): SliceShape {
  const [x, y, z] = extents;
  switch (axis) {
    case "z":
      return { rows: y, cols: x };
    case "y":
      return { rows: z, cols: x };
    case "x":
      return { rows: z, cols: y };
  }
}

export function voxelIndex(extents: Extents, v: Voxel): number {
  const [x, y, z] = v;
  return x + extents[0] * (y + extents[1] * z);
}

// plane cell -> full voxel coordinate
export function cellToVoxel(axis: Axis, index: number, row: number,
                            col: number): Voxel {
  switch (axis) {
    case "z":
      return [col, row, index];
    case "y":
      return [col, index, row];
    case "x":
      return [index, col, row];
  }
}

// full voxel coordinate -> plane placement (on whichever slice holds it)
export function voxelToCell(axis: Axis, v: Voxel): { index: number; row: number; col: number } {
  const [x, y, z] = v;
  switch (axis) {
    case "z":
      return { index: z, row: y, col: x };
    case "y":
      return { index: y, row: z, col: x };
    case "x":
      return { index: x, row: z, col: y };
  }
}

// Row-major plane of a flat x-fastest array; plain numbers so image floats
// and label bytes share one path.
export function extractSlice(data: ArrayLike<number>, extents: Extents,
                             axis: Axis, index: number): number[] {
  const extent = axisExtent(extents, axis);
  if (!Number.isInteger(index) || index < 0 || index >= extent) {
    throw new RangeError(`slice index ${index} outside axis extent ${extent}`);
  }
  const { rows, cols } = sliceShape(extents, axis);
  const out = new Array<number>(rows * cols);
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      out[r * cols + c] = data[voxelIndex(extents, cellToVoxel(axis, index, r, c))] as number;
    }
  }
  return out;
}

// Canvas mapping: each cell covers scale x scale device pixels, so a point
// maps to the cell whose center is nearest (floor of p/scale, clamped at
// the borders) and a cell maps back to its center pixel.
export function canvasToCell(px: number, py: number, scale: number,
                             shape: SliceShape): { row: number; col: number } {
  const clamp = (v: number, n: number) => Math.min(Math.max(v, 0), n - 1);
  return {
    row: clamp(Math.floor(py / scale), shape.rows),
    col: clamp(Math.floor(px / scale), shape.cols),
  };
}

export function cellToCanvas(row: number, col: number,
                             scale: number): { px: number; py: number } {
  return { px: (col + 0.5) * scale, py: (row + 0.5) * scale };
}

// click markers that live on the displayed slice
export function sliceMarkers(
  clicks: readonly { position: Voxel; category: number }[],
  axis: Axis, index: number,
): { row: number; col: number; category: number }[] {
  const out = [];
  for (const click of clicks) {
    const cell = voxelToCell(axis, click.position);
    if (cell.index === index) {
      out.push({ row: cell.row, col: cell.col, category: click.category });
    }
  }
  return out;
}
