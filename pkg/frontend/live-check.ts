// One-shot contract check against a live service (not part of the suite):
//   npx vite-node live-check.ts -- http://127.0.0.1:8123 case.vol case.lbl
import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

import { httpApi } from "./src/client";
import { cOrderBytes, fromBase64, parseLabels, parseVolume, toBase64 } from "./src/codec";
import { extractSlice } from "./src/grid";

const [base, volPath, gtPath] = process.argv.slice(2);
const api = httpApi(base!);

const volFile = new Uint8Array(readFileSync(volPath!));
const gtFile = new Uint8Array(readFileSync(gtPath!));
const volume = parseVolume(volFile);
console.log("volume extents", volume.extents);

const create = await api.createSession(toBase64(volFile), toBase64(gtFile));
console.log("session", create.session_id, "step", create.step,
            "categories", create.categories, "dice", create.dice);
const auto = parseLabels(fromBase64(create.mask_b64));
const digest = createHash("sha256").update(cOrderBytes(auto)).digest("hex");
console.log("auto sha matches:", digest === create.mask_sha256);

const click = await api.addClick(create.session_id, [8, 9, 10], 2, 1);
console.log("click step", click.step, "dice", click.dice);
const refined = parseLabels(fromBase64(click.mask_b64));
console.log("refined sha matches:",
            createHash("sha256").update(cOrderBytes(refined)).digest("hex")
            === click.mask_sha256);

const slice = await api.slice(create.session_id, "z", 10, "refined");
const local = extractSlice(refined.voxels, refined.extents, "z", 10);
const flat = slice.values.flat();
console.log("served slice == local extraction:",
            flat.length === local.length && flat.every((v, i) => v === local[i]));

const err = await api.slice(create.session_id, "z", 10, "error");
console.log("error slice cells:", err.values.flat().reduce((a, b) => a + b, 0));

const undo = await api.undo(create.session_id);
const undone = parseLabels(fromBase64(undo.mask_b64));
console.log("undo restores step 0 bitwise:",
            undone.voxels.length === auto.voxels.length
            && undone.voxels.every((v, i) => v === auto.voxels[i]));

const state = await api.state(create.session_id);
console.log("history steps:", state.steps.map((s) => s.step),
            "step0 sha matches:", state.steps[0]!.mask_sha256 === digest);

const stale = await api.addClick(create.session_id, [1, 1, 1], 1, 99)
  .catch((e) => e);
console.log("stale step rejected:", stale.status === 409, "-", stale.message);
