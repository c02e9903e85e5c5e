// DOM assembly and canvas painting. All state transitions go through the
// SessionStore; this layer only renders the view and translates events.

import type { Api } from "./client";
import { categoryCss, composeSlice } from "./compose";
import { AXES, canvasToCell, cellToVoxel, extractSlice, axisExtent,
         sliceMarkers, sliceShape } from "./grid";
import type { Axis } from "./grid";
import { SessionStore } from "./store";

const VIEW_PX = 512; // target canvas edge; scale snaps to integers

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, cls?: string, text?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) {
    node.className = cls;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export interface App {
  store: SessionStore;
  root: HTMLElement;
  canvas: HTMLCanvasElement;
  repaint(): void;
}

export function buildApp(root: HTMLElement, api: Api): App {
  const store = new SessionStore(api);

  // -- static skeleton -----------------------------------------------------

  const banner = el("header", "banner");
  const title = el("strong", "", "interactive segmentation viewer");
  const volumeInput = el("input", "file-volume") as HTMLInputElement;
  volumeInput.type = "file";
  const gtInput = el("input", "file-gt") as HTMLInputElement;
  gtInput.type = "file";
  const openButton = el("button", "open", "open volume");
  banner.append(title, el("span", "hint", "volume (.vol)"), volumeInput,
                el("span", "hint", "labels (.lbl, optional)"), gtInput,
                openButton);

  const stage = el("div", "stage");
  const canvas = el("canvas", "viewport");
  const gridCanvas = el("canvas"); // offscreen, one pixel per grid cell
  stage.append(canvas);

  const side = el("div", "side");
  const notice = el("div", "notice");
  const diceBadge = el("div", "dice-badge");

  const axisRow = el("div", "row axis-row");
  const axisButtons = new Map<Axis, HTMLButtonElement>();
  for (const axis of AXES) {
    const b = el("button", "axis", axis);
    b.addEventListener("click", () => store.setAxis(axis));
    axisButtons.set(axis, b);
    axisRow.append(b);
  }

  const sliceRow = el("div", "row slice-row");
  const slider = el("input", "slice") as HTMLInputElement;
  slider.type = "range";
  slider.min = "0";
  const sliceLabel = el("span", "slice-label");
  slider.addEventListener("input", () => store.setSlice(Number(slider.value)));
  sliceRow.append(slider, sliceLabel);

  const palette = el("div", "row palette");

  const layers = el("div", "row layers");
  const toggles = new Map<"auto" | "refined" | "error", HTMLInputElement>();
  for (const [layer, label] of [["refined", "refined (fill)"],
                                ["auto", "auto (outline)"],
                                ["error", "error (served)"]] as const) {
    const wrap = el("label", "layer");
    const box = el("input") as HTMLInputElement;
    box.type = "checkbox";
    box.addEventListener("change", () => store.toggleOverlay(layer));
    toggles.set(layer, box);
    wrap.append(box, document.createTextNode(" " + label));
    layers.append(wrap);
  }

  const undoButton = el("button", "undo", "undo click");
  undoButton.addEventListener("click", () => void store.undoClick());

  const historyList = el("ol", "history");
  side.append(notice, diceBadge, axisRow, sliceRow, palette, layers,
              undoButton, historyList);

  root.append(banner, stage, side);

  // -- events --------------------------------------------------------------

  openButton.addEventListener("click", () => {
    void (async () => {
      const volumeFile = volumeInput.files?.[0];
      if (!volumeFile) {
        return;
      }
      const gtFile = gtInput.files?.[0];
      await store.startSession(
        new Uint8Array(await volumeFile.arrayBuffer()),
        gtFile ? new Uint8Array(await gtFile.arrayBuffer()) : null);
    })();
  });

  canvas.addEventListener("click", (event) => {
    const v = store.view;
    if (v.phase !== "ready" || v.busy || !v.extents) {
      return;
    }
    const rect = canvas.getBoundingClientRect();
    const scale = Number(canvas.dataset.scale) || 1;
    const shape = sliceShape(v.extents, v.axis);
    const cell = canvasToCell(event.clientX - rect.left,
                              event.clientY - rect.top, scale, shape);
    void store.placeClick(cellToVoxel(v.axis, v.index, cell.row, cell.col));
  });

  window.addEventListener("keydown", (event) => {
    const target = event.target;
    if (target instanceof HTMLInputElement
        || target instanceof HTMLTextAreaElement) {
      return; // keep arrows for the focused control
    }
    if (event.key === "ArrowLeft") {
      store.setSlice(store.view.index - 1);
    } else if (event.key === "ArrowRight") {
      store.setSlice(store.view.index + 1);
    }
  });

  // -- painting ------------------------------------------------------------

  function formatDice(values: number[]): string {
    return values.map((v) => v.toFixed(3)).join(" / ");
  }

  function paintCanvas(): void {
    const v = store.view;
    const ctx = canvas.getContext("2d");
    if (!ctx) {
      return;
    }
    if (v.phase !== "ready" || !v.extents) {
      canvas.width = VIEW_PX;
      canvas.height = VIEW_PX;
      ctx.clearRect(0, 0, canvas.width, canvas.height);
      return;
    }
    const shape = sliceShape(v.extents, v.axis);
    const scale = Math.max(1, Math.floor(VIEW_PX / Math.max(shape.rows, shape.cols)));
    canvas.width = shape.cols * scale;
    canvas.height = shape.rows * scale;
    canvas.dataset.scale = String(scale);

    const slice = (source: ArrayLike<number> | null) =>
      source ? extractSlice(source, v.extents!, v.axis, v.index) : null;
    const rgba = composeSlice({
      shape,
      image: slice(v.volume ? v.volume.voxels : null),
      window: v.window,
      refined: v.overlays.refined && v.mask ? slice(v.mask.voxels) : null,
      auto: v.overlays.auto && v.autoMask ? slice(v.autoMask.voxels) : null,
      error: v.overlays.error ? v.errorSlice : null,
    });
    gridCanvas.width = shape.cols;
    gridCanvas.height = shape.rows;
    const gctx = gridCanvas.getContext("2d");
    if (gctx) {
      gctx.putImageData(new ImageData(rgba, shape.cols, shape.rows), 0, 0);
    }
    ctx.imageSmoothingEnabled = false;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.drawImage(gridCanvas, 0, 0, canvas.width, canvas.height);

    for (const mark of sliceMarkers(store.clicks, v.axis, v.index)) {
      ctx.lineWidth = 2;
      ctx.strokeStyle = categoryCss(mark.category);
      ctx.strokeRect(mark.col * scale + 1, mark.row * scale + 1,
                     scale - 2, scale - 2);
    }
  }

  function paintPalette(): void {
    const v = store.view;
    if (palette.childElementCount !== v.categories) {
      palette.textContent = "";
      for (let c = 0; c < v.categories; c++) {
        const b = el("button", "category",
                     c === 0 ? "0 background" : `class ${c}`);
        b.style.borderColor = categoryCss(c);
        b.addEventListener("click", () => store.setCategory(c));
        palette.append(b);
      }
    }
    for (let c = 0; c < palette.childElementCount; c++) {
      palette.children[c]!.classList.toggle("active", c === v.category);
    }
  }

  function paintControls(): void {
    const v = store.view;
    const ready = v.phase === "ready";
    for (const [axis, b] of axisButtons) {
      b.disabled = !ready;
      b.classList.toggle("active", v.axis === axis);
    }
    const extent = ready && v.extents ? axisExtent(v.extents, v.axis) : 1;
    slider.max = String(extent - 1);
    slider.value = String(v.index);
    slider.disabled = !ready;
    sliceLabel.textContent = `${v.axis} = ${v.index} / ${extent - 1}`;
    for (const [layer, box] of toggles) {
      box.checked = v.overlays[layer];
      box.disabled = !ready || (layer === "error" && !v.hasGt);
    }
    undoButton.disabled = !ready || v.busy || v.history.length <= 1;
    openButton.disabled = v.phase === "creating" || v.busy;
    canvas.classList.toggle("busy", v.busy);

    notice.textContent = v.notice ?? "";
    notice.classList.toggle("shown", v.notice !== null);

    const dice = store.currentDice();
    if (dice) {
      diceBadge.textContent = `Dice ${formatDice(dice)}`;
      diceBadge.dataset.exact = JSON.stringify(dice);
    } else {
      diceBadge.textContent = ready ? "Dice n/a (no ground truth)" : "";
      delete diceBadge.dataset.exact;
    }

    historyList.textContent = "";
    for (const entry of [...v.history].reverse()) {
      const line = entry.click
        ? `step ${entry.step} · class ${entry.click.category} @ ` +
          `(${entry.click.position.join(", ")})`
        : "step 0 · automatic";
      const item = el("li", "step", line + (entry.dice
        ? ` · ${formatDice(entry.dice)}` : ""));
      historyList.append(item);
    }
  }

  function repaint(): void {
    paintPalette();
    paintControls();
    paintCanvas();
  }

  store.subscribe(repaint);
  repaint();
  return { store, root, canvas, repaint };
}
