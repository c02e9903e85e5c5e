"""Command-line pipeline: data generation, training, evaluation, serving.

Every subcommand requires --config and --seed so that any artifact can be
reproduced from its command line alone.  Failures print one JSON line to
stderr and exit with 2 (usage), 3 (I/O), or 4 (numeric divergence).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ABLATIONS, RunConfig, load_config, refiner_ckpt_name
from .encoder import EncoderOutput, automatic_mask, encode, init_encoder_params
from .errors import DivergenceError, FormatError
from .evaluate import dice_per_class, eval_curve
from .interaction import Click, StepRecord, session_run, write_trace
from .params import ParamStore, load_checkpoint, save_checkpoint
from .refiner import init_refiner_params, refine_forward
from .rng import Rng
from .synthetic import generate
from .tensor import no_grad
from .training import train_encoder, train_refiner
from .volume_io import LabelMask, load_labels, load_volume, save_labels, save_volume

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4


class _Parser(argparse.ArgumentParser):
    """argparse with single-line JSON usage errors on stderr."""

    def error(self, message):
        print(json.dumps({"error": "usage", "message": message}), file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing {what}: {path}")
    return path


def _load_split(out_dir: Path, split: str):
    d = out_dir / "data" / split
    vols = sorted(d.glob("case_*.vol"))
    if not vols:
        raise FileNotFoundError(f"missing dataset: no case files under {d} (run gen-data)")
    return [(load_volume(v), load_labels(_require(v.with_suffix(".lbl"), "labels")))
            for v in vols]


def _load_encoder(cfg: RunConfig, path: Path) -> ParamStore:
    store = init_encoder_params(cfg.encoder_config(), Rng(0))
    load_checkpoint(_require(path, "checkpoint"), store)
    return store


def _load_refiner(cfg: RunConfig, path: Path, ablation: str) -> ParamStore:
    store = init_refiner_params(cfg.refiner_config(ablation), Rng(0))
    load_checkpoint(_require(path, "checkpoint"), store)
    return store


def _write_curve(path: Path, curve: list[float]):
    lines = ["epoch\tloss"] + [f"{i}\t{v:.6f}" for i, v in enumerate(curve)]
    path.write_text("\n".join(lines) + "\n")


def _emit(**payload):
    print(json.dumps(payload, sort_keys=True))


def cmd_gen_data(args, cfg: RunConfig) -> int:
    rng = Rng(args.seed)
    spec = cfg.synthetic_spec()
    counts = {}
    for split, n in (("train", cfg.train_cases), ("eval", cfg.eval_cases)):
        d = Path(args.out_dir) / "data" / split
        d.mkdir(parents=True, exist_ok=True)
        for i, (vol, gt) in enumerate(generate(spec, n, rng.derive("gen-" + split))):
            save_volume(d / f"case_{i:03d}.vol", vol)
            save_labels(d / f"case_{i:03d}.lbl", gt)
        counts[split] = n
    _emit(command="gen-data", out_dir=str(args.out_dir), **counts)
    return 0


def cmd_train_encoder(args, cfg: RunConfig) -> int:
    out = Path(args.out_dir)
    data = _load_split(out, "train")
    store, curve = train_encoder(data, cfg.encoder_train_config(),
                                 cfg.encoder_config(), Rng(args.seed))
    ckpt = out / "encoder.ckpt"
    save_checkpoint(ckpt, store)
    _write_curve(out / "encoder_loss.tsv", curve)
    _emit(command="train-encoder", checkpoint=str(ckpt), final_loss=curve[-1])
    return 0


def cmd_train_refiner(args, cfg: RunConfig) -> int:
    out = Path(args.out_dir)
    data = _load_split(out, "train")
    enc_path = Path(args.checkpoint) if args.checkpoint else out / "encoder.ckpt"
    enc = _load_encoder(cfg, enc_path)
    store, curve = train_refiner(
        data, enc, cfg.encoder_config(), cfg.refiner_train_config(),
        cfg.refiner_config(args.ablation), cfg.simulator_config(), Rng(args.seed))
    ckpt = out / refiner_ckpt_name(args.ablation)
    save_checkpoint(ckpt, store)
    _write_curve(out / (ckpt.stem + "_loss.tsv"), curve)
    _emit(command="train-refiner", ablation=args.ablation, checkpoint=str(ckpt),
          final_loss=curve[-1])
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    out = Path(args.out_dir)
    data = _load_split(out, "eval")
    enc = _load_encoder(cfg, out / "encoder.ckpt")
    ref_path = Path(args.checkpoint) if args.checkpoint else \
        out / refiner_ckpt_name(args.ablation)
    ref = _load_refiner(cfg, ref_path, args.ablation)
    n_clicks = cfg.eval_clicks if args.clicks is None else int(args.clicks)
    report = eval_curve(data, enc, cfg.encoder_config(), ref,
                        cfg.refiner_config(args.ablation), n_clicks,
                        cfg.simulator_config(), Rng(args.seed))
    suffix = "" if args.ablation == "none" else "_" + args.ablation
    (out / f"report{suffix}.tsv").write_text(report.table())
    (out / f"report{suffix}.json").write_text(report.to_json())
    sys.stdout.write(report.table())
    return 0


def _parse_click_file(path: Path) -> list[Click]:
    spec = json.loads(_require(path, "click list").read_text())
    clicks = spec["clicks"] if isinstance(spec, dict) else spec
    out = []
    for entry in clicks:
        pos = entry["position"]
        if len(pos) != 3:
            raise ValueError(f"click position must have 3 coordinates, got {pos}")
        out.append(Click(position=(int(pos[0]), int(pos[1]), int(pos[2])),
                         category=int(entry["category"])))
    if not out:
        raise ValueError("click list is empty")
    return out


def _replay(enc_out: EncoderOutput, gt: LabelMask | None, ref: ParamStore,
            ref_cfg, clicks: list[Click]) -> list[StepRecord]:
    """Apply an explicit click list cumulatively, recording each prefix."""
    auto = automatic_mask(enc_out, ref_cfg.categories)

    def record(step, click, mask):
        dice = dice_per_class(mask, gt) if gt is not None else []
        return StepRecord(step=step, click=click, dice=dice,
                          converged=False, labels=mask.labels)

    records = [record(0, None, auto)]
    for t in range(1, len(clicks) + 1):
        with no_grad():
            res = refine_forward(enc_out, clicks[:t], ref, ref_cfg)
        refined = LabelMask(np.argmax(res.logits.data, axis=3).astype(np.uint8),
                            ref_cfg.categories)
        records.append(record(t, clicks[t - 1], refined))
    return records


def cmd_simulate(args, cfg: RunConfig) -> int:
    out = Path(args.out_dir)
    case_dir = out / "data" / "eval"
    vol_path = _require(case_dir / f"case_{args.case:03d}.vol", "volume")
    vol = load_volume(vol_path)
    gt_path = vol_path.with_suffix(".lbl")
    gt = load_labels(gt_path) if gt_path.exists() else None

    enc = _load_encoder(cfg, out / "encoder.ckpt")
    ref_path = Path(args.checkpoint) if args.checkpoint else \
        out / refiner_ckpt_name(args.ablation)
    ref = _load_refiner(cfg, ref_path, args.ablation)
    ref_cfg = cfg.refiner_config(args.ablation)
    with no_grad():
        enc_out = encode(vol, enc, cfg.encoder_config())

    replay_path = None
    n_clicks = cfg.eval_clicks
    if args.clicks is not None:
        try:
            n_clicks = int(args.clicks)
        except ValueError:
            replay_path = Path(args.clicks)

    if replay_path is not None:
        records = _replay(enc_out, gt, ref, ref_cfg, _parse_click_file(replay_path))
    else:
        if gt is None:
            raise FileNotFoundError(f"missing labels: {gt_path} (needed to simulate clicks)")
        records = session_run(enc_out, gt, ref, ref_cfg, n_clicks,
                              cfg.simulator_config(), Rng(args.seed))

    sim_dir = out / "sim" / f"case_{args.case:03d}"
    sim_dir.mkdir(parents=True, exist_ok=True)
    for r in records:
        save_labels(sim_dir / f"step_{r.step:03d}.lbl",
                    LabelMask(r.labels, ref_cfg.categories))
    write_trace(sim_dir / "trace.jsonl", records)
    _emit(command="simulate", case=args.case, steps=len(records),
          trace=str(sim_dir / "trace.jsonl"),
          final_mask_sha256=records[-1].mask_sha256)
    return 0


def cmd_serve(args, cfg: RunConfig) -> int:
    import uvicorn

    from .service import make_app

    out = Path(args.out_dir)
    app = make_app(out_dir=out, cfg=cfg, ablation=args.ablation)
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="info")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="tis", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **extra):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--seed", required=True, type=int)
        p.add_argument("--out-dir", required=True, help="artifact directory")
        for flag, kwargs in extra.items():
            p.add_argument(flag, **kwargs)
        p.set_defaults(func=func)
        return p

    ablation = {"choices": ABLATIONS, "default": "none"}
    add("gen-data", cmd_gen_data)
    add("train-encoder", cmd_train_encoder)
    add("train-refiner", cmd_train_refiner,
        **{"--checkpoint": {"help": "encoder checkpoint (default OUT/encoder.ckpt)"},
           "--ablation": ablation})
    add("eval", cmd_eval,
        **{"--clicks": {"help": "click budget (default: config eval_clicks)"},
           "--checkpoint": {"help": "refiner checkpoint override"},
           "--ablation": ablation})
    add("simulate", cmd_simulate,
        **{"--clicks": {"help": "click count, or a JSON click-list file to replay"},
           "--checkpoint": {"help": "refiner checkpoint override"},
           "--ablation": ablation,
           "--case": {"type": int, "default": 0, "help": "eval case index"}})
    add("serve", cmd_serve,
        **{"--port": {"type": int, "default": 8000},
           "--ablation": ablation})
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    def fail(kind: str, exc: BaseException, code: int) -> int:
        print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)
        return code

    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except DivergenceError as exc:
        return fail("divergence", exc, EXIT_DIVERGENCE)
    except (OSError, FormatError) as exc:
        return fail("io", exc, EXIT_IO)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        return fail("usage", exc, EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
