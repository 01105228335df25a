"""Command-line front end.

Every subcommand resolves its configuration (JSON file, then flags), writes
the resolved document to ``<out>/config.json`` and appends one JSON record
per result to ``<out>/metrics.jsonl``.  Series are also written as CSV.

Run ids are a hash of the resolved configuration.  Timestamps honour
``SOURCE_DATE_EPOCH`` so that repeated runs can be made byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import SynthSpec, avg_correlation_vs_stepsize, load_dataset, select_split, write_synthetic
from .engine import TrainConfig, bimodal_gan_probe, train_classifier, train_forecaster
from .errors import FmrnnError, SegmentationError
from .featmap import ForecasterModel, lstm_cell_count, param_count, plan_segments
from .models import load_model, save_model
from .pipeline import AnticipationConfig, accuracy_vs_predict_fraction, evaluate

log = logging.getLogger("fmrnn")

# flag name -> (config section, key, type)
OVERRIDES = {
    "mode": ("train", "mode", str),
    "readout": ("train", "readout", str),
    "feature_step": ("train", "D", int),
    "stride": ("train", "S", int),
    "hidden": ("train", "H", int),
    "kernels": ("train", "n_kernels", int),
    "w_l2": ("train", "w_l2", float),
    "w_adv": ("train", "w_adv", float),
    "epochs": ("train", "epochs", int),
    "lr": ("train", "base_lr", float),
    "observe_frac": ("anticipation", "observe_fraction", float),
    "predict_frac": ("anticipation", "predict_fraction", float),
    "pooling": ("anticipation", "pooling", str),
}

SWEEP_AXES = {"D": "D", "S": "S", "H": "H", "n": "n_kernels", "p": "predict_fraction"}


# ---------------------------------------------------------------------------
# configuration and output
# ---------------------------------------------------------------------------

def _defaults() -> dict:
    spec = dataclasses.asdict(SynthSpec())
    return {"synth": spec, "train": TrainConfig().to_dict(),
            "anticipation": dataclasses.asdict(AnticipationConfig())}


def resolve_config(args) -> dict:
    """Defaults, then the --config file, then flags."""
    cfg = _defaults()
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        for section, values in doc.items():
            if isinstance(values, dict) and isinstance(cfg.get(section), dict):
                unknown = set(values) - set(cfg[section])
                if unknown:
                    raise FmrnnError(f"unknown keys in [{section}]: {sorted(unknown)}")
                cfg[section].update(values)
            else:
                cfg[section] = values
    for flag, (section, key, typ) in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg[section][key] = typ(value)
    if getattr(args, "seed", None) is not None:
        cfg["synth"]["seed"] = args.seed
        cfg["train"]["seed"] = args.seed
    cfg["command"] = args.command
    for key in ("data", "forecaster", "classifier", "split"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = str(value)
    return cfg


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(**cfg["train"])


def _synth_spec(cfg: dict) -> SynthSpec:
    spec = dict(cfg["synth"])
    for key in ("split_fracs", "bimodal"):
        if spec.get(key) is not None:
            spec[key] = tuple(spec[key])
    return SynthSpec(**spec)


def _anticipation(cfg: dict) -> AnticipationConfig:
    return AnticipationConfig(**cfg["anticipation"])


class RunOutput:
    """Output directory holding config.json, metrics.jsonl and series CSVs."""

    def __init__(self, out: Path, cfg: dict):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        text = json.dumps(cfg, indent=1, sort_keys=True) + "\n"
        (self.dir / "config.json").write_text(text)
        self.run_id = hashlib.sha256(text.encode()).hexdigest()[:16]

    @staticmethod
    def timestamp() -> str:
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        t = int(epoch) if epoch else time.time()
        return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))

    def record(self, metrics: dict | None = None, series: dict | None = None, **extra) -> dict:
        rec = {"run_id": self.run_id, "timestamp": self.timestamp(),
               "command": self.cfg["command"], "config": self.cfg,
               "metrics": metrics or {}, "series": series or {}}
        rec.update(extra)
        with open(self.dir / "metrics.jsonl", "a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return rec

    def csv(self, name: str, header, rows) -> Path:
        path = self.dir / name
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        return path

    def jsonl(self, name: str, records) -> Path:
        path = self.dir / name
        with open(path, "w") as fh:
            for r in records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
        return path


def _dataset(cfg: dict):
    if not cfg.get("data"):
        raise FmrnnError("--data (path to manifest.json) is required")
    return load_dataset(cfg["data"])


def _split(seqs, manifest, name):
    chosen = select_split(seqs, manifest, name)
    if not chosen and not any(manifest.splits.values()):
        chosen = list(seqs)
    if not chosen:
        raise FmrnnError(f"split {name!r} is empty")
    return chosen


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_synthetic(args, cfg, out: RunOutput) -> int:
    spec = _synth_spec(cfg)
    path = write_synthetic(out.dir, spec)
    n = spec.n_classes * spec.videos_per_class
    out.record({"videos": n, "d": spec.d, "frames": spec.n_frames}, manifest=str(path.name))
    print(f"wrote {n} videos to {path}")
    return 0


def _fit_forecaster(train, tc: TrainConfig, out: RunOutput, tag: str = ""):
    model, disc, hist = train_forecaster(train, tc)
    save_model(model, out.dir / f"forecaster{tag}.ckpt", extra={"seed": tc.seed})
    if disc is not None:
        save_model(disc, out.dir / f"discriminator{tag}.ckpt", extra={"seed": tc.seed})
    out.jsonl(f"loss_forecaster{tag}.jsonl", hist.records)
    return model, hist


def _fit_classifier(train, tc: TrainConfig, n_classes: int, out: RunOutput):
    model, hist = train_classifier(train, tc, n_classes=n_classes)
    save_model(model, out.dir / "classifier.ckpt", extra={"seed": tc.seed})
    out.jsonl("loss_classifier.jsonl", hist.records)
    return model, hist


def cmd_train(args, cfg, out: RunOutput) -> int:
    seqs, manifest = _dataset(cfg)
    train = _split(seqs, manifest, "train")
    tc = _train_config(cfg)
    metrics = {}
    if args.what in ("forecaster", "both"):
        model, hist = _fit_forecaster(train, tc, out)
        pc = param_count(model)
        em = hist.epoch_means("l2")
        metrics.update({"forecaster_params": pc.exact, "forecaster_cell_params": pc.cell,
                        "approx_formula": pc.approx_formula,
                        "approx_formula_text": pc.approx_formula_text,
                        "final_l2": em[-1]})
        print(f"forecaster: {pc.exact} parameters, final epoch L2 {em[-1]:.6g}")
    if args.what in ("classifier", "both"):
        clf, hist = _fit_classifier(train, tc, len(manifest.class_names), out)
        last = [r for r in hist.records if r["epoch"] == hist.records[-1]["epoch"]]
        acc = float(np.mean([r["acc"] for r in last]))
        metrics.update({"classifier_params": clf.store.size(), "classifier_train_acc": acc})
        print(f"classifier: final epoch batch accuracy {acc:.4f}")
    out.record(metrics)
    return 0


def cmd_evaluate(args, cfg, out: RunOutput) -> int:
    seqs, manifest = _dataset(cfg)
    split = _split(seqs, manifest, cfg.get("split", "test"))
    ac = _anticipation(cfg)
    classifier = load_model(cfg["classifier"], kind="classifier", require={"d": manifest.d})
    forecaster = None
    if ac.predict_fraction > 0 or args.p_sweep:
        if not cfg.get("forecaster"):
            raise FmrnnError("--forecaster is required when predicting frames")
        forecaster = load_model(cfg["forecaster"], kind="forecaster", require={"d": manifest.d})
    acc, _ = evaluate(split, forecaster, classifier, ac)
    series = {}
    if args.p_sweep:
        fractions = [float(p) for p in args.p_sweep.split(",")]
        curve = accuracy_vs_predict_fraction(split, forecaster, classifier, fractions,
                                             ac.observe_fraction, ac.pooling)
        series["accuracy_vs_p"] = [[p, a] for p, a in curve]
        out.csv("accuracy_vs_p.csv", ["p", "accuracy"], curve)
    out.record({"accuracy": acc, "videos": len(split)}, series)
    print(f"accuracy {acc:.4f} on {len(split)} videos "
          f"(r={ac.observe_fraction}, p={ac.predict_fraction}, pooling={ac.pooling})")
    return 0


def _parse_values(text: str, axis: str):
    conv = float if axis == "p" else int
    return [conv(v) for v in text.split(",") if v.strip()]


def cmd_sweep(args, cfg, out: RunOutput) -> int:
    axis = args.axis
    values = _parse_values(args.values, axis)
    seqs, manifest = _dataset(cfg)
    train = _split(seqs, manifest, "train")
    test = _split(seqs, manifest, cfg.get("split", "test"))
    base = dict(cfg["train"])
    if axis == "n":
        base["readout"] = "rbf"
    tc = TrainConfig(**base)
    classifier, _ = _fit_classifier(train, tc, len(manifest.class_names), out)
    ac = _anticipation(cfg)
    rows = []
    shared = None
    for value in values:
        point = dict(base)
        pred = ac.predict_fraction
        if axis == "p":
            pred = value
        else:
            point[SWEEP_AXES[axis]] = value
        try:
            plan_segments(manifest.d, point["D"], point["S"])
            point_ac = AnticipationConfig(ac.observe_fraction, pred, ac.pooling, ac.k)
        except (SegmentationError, FmrnnError, ValueError) as exc:
            log.warning("skip %s=%s: %s", axis, value, exc)
            out.record({}, status="skipped", axis=axis, value=value, reason=str(exc))
            rows.append([value, "", "skipped"])
            continue
        if axis == "p":
            # the forecaster does not depend on p; train it once
            if shared is None:
                shared, _ = _fit_forecaster(train, TrainConfig(**point), out, tag="_p")
            model = shared
        else:
            model, _ = _fit_forecaster(train, TrainConfig(**point), out, tag=f"_{axis}{value}")
        acc, _ = evaluate(test, model, classifier, point_ac)
        out.record({"accuracy": acc, "params": param_count(model).exact},
                   status="ok", axis=axis, value=value)
        rows.append([value, acc, "ok"])
        print(f"{axis}={value}: accuracy {acc:.4f}")
    out.csv(f"sweep_{axis}.csv", [axis, "accuracy", "status"], rows)
    out.record({}, {f"accuracy_vs_{axis}": rows}, status="summary", axis=axis)
    return 0


def cmd_corr_analysis(args, cfg, out: RunOutput) -> int:
    seqs, manifest = _dataset(cfg)
    steps = [int(v) for v in args.steps.split(",")]
    valid, skipped = [], []
    for D in steps:
        (valid if D >= 1 and manifest.d % D == 0 else skipped).append(D)
    for D in skipped:
        log.warning("skip D=%s: does not divide d=%s", D, manifest.d)
    curve = avg_correlation_vs_stepsize(seqs, valid)
    out.csv("correlation_vs_D.csv", ["D", "mean_abs_correlation"], curve)
    out.record({}, {"correlation_vs_D": [[D, v] for D, v in curve]}, skipped=skipped)
    for D, v in curve:
        print(f"D={D}: {v:.4f}")
    return 0


def cmd_param_count(args, cfg, out: RunOutput | None) -> int:
    tc = cfg["train"]
    d = args.d
    model = ForecasterModel(d, tc["D"], tc["S"], mode=tc["mode"], readout=tc["readout"],
                            hidden=tc["H"], n_kernels=tc["n_kernels"])
    pc = param_count(model)
    vanilla = lstm_cell_count(args.vanilla_d, args.vanilla_hidden)
    vd, vh = args.vanilla_d, args.vanilla_hidden
    vanilla_approx = 4 * (vd * vh + vd * vd)
    print(f"mode={tc['mode']} d={d} D={tc['D']} S={tc['S']} H={tc['H']}")
    print(f"  exact total {pc.exact}  (cell {pc.cell}, readout {pc.readout})")
    print(f"  approximation {pc.approx_formula_text} = {pc.approx_formula}")
    print(f"  vanilla LSTM cell at d={vd}, H={vh}: exact {vanilla}, "
          f"approximation 4(dH+d^2) = {vanilla_approx}")
    if out is not None:
        out.record({"exact": pc.exact, "cell": pc.cell, "readout": pc.readout,
                    "approx_formula": pc.approx_formula,
                    "approx_formula_text": pc.approx_formula_text,
                    "vanilla_cell": vanilla, "vanilla_approx_formula": vanilla_approx})
    return 0


def cmd_verify(args, cfg, out: RunOutput | None) -> int:
    results = run_checks(seed=cfg["train"]["seed"])
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    failed = [r.name for r in results if not r.ok]
    if out is not None:
        out.record({r.name: r.ok for r in results},
                   details={r.name: r.detail for r in results})
    if failed:
        raise FmrnnError(f"verification failed: {', '.join(failed)}")
    return 0


# ---------------------------------------------------------------------------
# verify: gradient suite, counts and oracles
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


GRAD_TOL = 1e-4
GRAD_POINTS = 5


def _grad_cases():
    """(name, builder) pairs; builder(rng) -> (loss function, ParamStore)."""
    from .layers import (LSTMCell, Linear, MLP, RBFLayer, disc_loss, disc_loss_grads,
                         gen_adv_loss, gen_adv_loss_grad, l2_loss, l2_loss_grad,
                         softmax_cross_entropy, softmax_cross_entropy_grad)
    from .models import ClassifierModel, DiscriminatorModel
    from .numcore import ParamStore

    def weighted(block, in_shape, out_shape):
        def build(rng):
            store = ParamStore()
            layer = block(store)
            layer.init(rng)
            store.add("input", rng.standard_normal(in_shape))
            w = rng.standard_normal(out_shape)

            def f(s):
                y, cache = layer.forward(s["input"])
                s.grad("input")[...] += layer.backward(w, cache)
                return float((y * w).sum())
            return f, store
        return build

    def lstm(in_dim):
        def build(rng):
            store = ParamStore()
            cell = LSTMCell(store, "cell", in_dim, 3)
            cell.init(rng)
            store.add("input", rng.standard_normal((2, 4, in_dim)))
            w = rng.standard_normal((2, 4, 3))

            def f(s):
                hs, cache = cell.forward(s["input"])
                s.grad("input")[...] += cell.backward(w, cache)
                return float((hs * w).sum())
            return f, store
        return build

    def scalar_loss(kind):
        def build(rng):
            store = ParamStore()
            if kind == "l2":
                target = rng.standard_normal(5)
                store.add("pred", rng.standard_normal(5))

                def f(s):
                    s.grad("pred")[...] += l2_loss_grad(target, s["pred"])
                    return l2_loss(target, s["pred"])
            elif kind == "adversarial":
                store.add("p", rng.uniform(0.05, 0.95, 4))
                store.add("q", rng.uniform(0.05, 0.95, 4))

                def f(s):
                    gr, gf = disc_loss_grads(s["p"], s["q"])
                    s.grad("p")[...] += gr + gen_adv_loss_grad(s["p"])
                    s.grad("q")[...] += gf
                    return float(disc_loss(s["p"], s["q"]).sum() + gen_adv_loss(s["p"]).sum())
            else:
                labels = rng.integers(0, 4, 3)
                store.add("logits", 2 * rng.standard_normal((3, 4)))

                def f(s):
                    loss, probs = softmax_cross_entropy(s["logits"], labels)
                    s.grad("logits")[...] += softmax_cross_entropy_grad(probs, labels)
                    return loss
            return f, store
        return build

    def forecaster(mode, readout):
        def build(rng):
            model = ForecasterModel(6, 3, 3, mode=mode, readout=readout, hidden=3, n_kernels=4)
            model.init(rng)
            X = model.units(rng.standard_normal((2, 3, 6)))

            def f(s):
                Y, cache = model.predict_units(X)
                pred, target = Y[:, :-1], X[:, 1:]
                dY = np.zeros_like(Y)
                dY[:, :-1] = l2_loss_grad(target, pred)
                model.backward_units(dY, cache)
                return l2_loss(target, pred)
            return f, model.store
        return build

    def classifier(rng):
        model = ClassifierModel(6, 3, widths=(8, 5), n_kernels=7).init(rng)
        X, y = rng.standard_normal((4, 6)), rng.integers(0, 3, 4)

        def f(s):
            logits, cache = model.logits(X)
            loss, probs = softmax_cross_entropy(logits, y)
            model.backward(softmax_cross_entropy_grad(probs, y), cache)
            return loss
        return f, model.store

    def discriminator(rng):
        model = DiscriminatorModel(4, widths=(6, 5)).init(rng)
        real, fake = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))

        def f(s):
            pr, cr = model.forward(real)
            pf, cf = model.forward(fake)
            gr, gf = disc_loss_grads(pr, pf)
            model.backward(gr / 3, cr)
            model.backward(gf / 3, cf)
            return float(disc_loss(pr, pf).mean())
        return f, model.store

    cases = [
        ("lstm_scalar_input", lstm(1)),
        ("lstm_vector_input", lstm(3)),
        ("linear", weighted(lambda st: Linear(st, "lin", 4, 3), (5, 4), (5, 3))),
        ("rbf", weighted(lambda st: RBFLayer(st, "rbf", 6, 4, 2), (3, 4), (3, 2))),
        ("mlp", weighted(lambda st: MLP(st, "mlp", [4, 6, 3]), (4, 4), (4, 3))),
        ("l2_loss", scalar_loss("l2")),
        ("adversarial_losses", scalar_loss("adversarial")),
        ("softmax_cross_entropy", scalar_loss("ce")),
        ("classifier", classifier),
        ("discriminator", discriminator),
    ]
    for mode in ("flattened", "per_channel", "vanilla_lstm"):
        for readout in ("linear", "rbf"):
            cases.append((f"forecaster_{mode}_{readout}", forecaster(mode, readout)))
    cases.append(("forecaster_linear", forecaster("linear", "linear")))
    return cases


def gradient_suite(seed: int = 0, points: int = GRAD_POINTS):
    """Worst relative gradient error per case over ``points`` random draws."""
    from .numcore import grad_check, make_rng

    results = {}
    for name, build in _grad_cases():
        worst = 0.0
        for k in range(points):
            f, store = build(make_rng([seed, 500, k]))
            worst = max(worst, grad_check(f, store, 1e-5))
        results[name] = worst
    return results


def _scatter_merge(plan, segments):
    total = np.zeros(plan.d)
    count = np.zeros(plan.d)
    for m, off in enumerate(plan.segment_offsets):
        for j in range(plan.D):
            total[off + j] += segments[m, j]
            count[off + j] += 1
    return total / count


def run_checks(seed: int = 0):
    from .numcore import make_rng
    from .pipeline import pool_predictions

    results = []
    for name, err in gradient_suite(seed).items():
        results.append(CheckResult(f"grad:{name}", err < GRAD_TOL, f"max rel err {err:.2e}"))

    flat = param_count(ForecasterModel(2048, 128, 64, hidden=4))
    flat_small = param_count(ForecasterModel(128, 128, 64, hidden=4))
    vanilla = lstm_cell_count(2048, 512)
    vanilla_approx = 4 * (2048 * 512 + 2048 ** 2)
    ok = (flat.cell == 96 and flat.exact == 101 and flat_small.exact == flat.exact
          and vanilla == 5_244_928 and vanilla / flat.cell > 5e4)
    results.append(CheckResult(
        "param_counts", ok,
        f"scalar cell exact {flat.cell} vs 4(H+1)={flat.approx_formula}; "
        f"vanilla d=2048 H=512 exact {vanilla} vs 4(dH+d^2)={vanilla_approx}"))

    rng = make_rng([seed, 600])
    bad = 0
    for _ in range(100):
        D = int(rng.integers(1, 17))
        S = int(rng.integers(1, D + 1))
        plan = plan_segments(D + int(rng.integers(0, 10)) * S, D, S)
        seg = rng.standard_normal((plan.n_segments, D))
        x = rng.standard_normal(plan.d)
        if (plan.merge(seg).tobytes() != _scatter_merge(plan, seg).tobytes()
                or plan.merge(plan.split(x)).tobytes() != x.tobytes()):
            bad += 1
    results.append(CheckResult("segmentation_oracle", bad == 0, f"{bad}/100 mismatches"))

    bad = 0
    for _ in range(1000):
        rows = rng.dirichlet(np.ones(int(rng.integers(2, 8))), size=int(rng.integers(1, 12)))
        avg, la = pool_predictions(rows, "average")
        mx, lm = pool_predictions(rows, "max")
        ref_avg = np.array([sum(r[c] for r in rows) / len(rows) for c in range(rows.shape[1])])
        ref_max = np.array([max(r[c] for r in rows) for c in range(rows.shape[1])])
        if (np.max(np.abs(avg - ref_avg)) > 1e-15 or mx.tobytes() != ref_max.tobytes()
                or la != int(np.argmax(avg)) or lm != int(np.argmax(ref_max))):
            bad += 1
    rows = [[0.95, 0.05], [0.3, 0.7], [0.3, 0.7], [0.3, 0.7]]
    disagree = pool_predictions(rows, "average")[1] == 1 and pool_predictions(rows, "max")[1] == 0
    results.append(CheckResult("pooling_oracle", bad == 0 and disagree,
                               f"{bad}/1000 mismatches; average/max disagreement case "
                               f"{'holds' if disagree else 'broken'}"))

    l2_dist, gan_dist = bimodal_gan_probe(-1.0, 1.0, TrainConfig(base_lr=0.01, seed=seed))
    ok = abs(l2_dist - 1.0) <= 0.2 and gan_dist < l2_dist
    results.append(CheckResult("bimodal_gan_probe", ok,
                               f"L2-only {l2_dist:.3f}, adversarial {gan_dist:.3f} "
                               f"(mode half-gap 1.0)"))
    return results


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "corr-analysis": cmd_corr_analysis,
    "param-count": cmd_param_count,
    "verify": cmd_verify,
}
OPTIONAL_OUT = ("param-count", "verify")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmrnn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fmrnn {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--mode", choices=["flattened", "per_channel", "linear", "vanilla_lstm"])
    model.add_argument("--readout", choices=["linear", "rbf"])
    model.add_argument("--feature-step", type=int, metavar="D")
    model.add_argument("--stride", type=int, metavar="S")
    model.add_argument("--hidden", type=int, metavar="H")
    model.add_argument("--kernels", type=int, metavar="N")
    model.add_argument("--w-l2", type=float)
    model.add_argument("--w-adv", type=float)
    model.add_argument("--epochs", type=int)
    model.add_argument("--lr", type=float)
    antic = argparse.ArgumentParser(add_help=False)
    antic.add_argument("--observe-frac", type=float, metavar="R")
    antic.add_argument("--predict-frac", type=float, metavar="P")
    antic.add_argument("--pooling", choices=["average", "max", "none"])
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="dataset manifest.json")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-synthetic", parents=[common], help="write a synthetic dataset")
    p = sub.add_parser("train", parents=[common, model, data], help="train models")
    p.add_argument("--what", choices=["forecaster", "classifier", "both"], default="both")
    p = sub.add_parser("evaluate", parents=[common, antic, data], help="anticipation accuracy")
    p.add_argument("--forecaster", help="forecaster checkpoint")
    p.add_argument("--classifier", required=True, help="classifier checkpoint")
    p.add_argument("--split", default="test")
    p.add_argument("--p-sweep", help="comma-separated prediction fractions")
    p = sub.add_parser("sweep", parents=[common, model, antic, data],
                       help="train and evaluate over one axis")
    p.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--split", default="test")
    p = sub.add_parser("corr-analysis", parents=[common, data],
                       help="segment correlation versus feature step size")
    p.add_argument("--steps", default="2,4,8,16,32", help="comma-separated D values")
    p = sub.add_parser("param-count", parents=[common, model], help="parameter counts")
    p.add_argument("--d", type=int, default=2048)
    p.add_argument("--vanilla-d", type=int, default=2048)
    p.add_argument("--vanilla-hidden", type=int, default=512)
    sub.add_parser("verify", parents=[common], help="gradient, count and oracle checks")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="fmrnn: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        if args.out:
            out = RunOutput(Path(args.out), cfg)
        elif args.command in OPTIONAL_OUT:
            out = None
        else:
            raise FmrnnError("--out is required")
        return COMMANDS[args.command](args, cfg, out)
    except (FmrnnError, OSError, ValueError, KeyError, TypeError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"fmrnn: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
