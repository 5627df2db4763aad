"""``flora`` command-line entry point.

Subcommands: ``pilot``, ``verify``, ``memreport``, ``train``. Exit codes:
0 success, 1 verification failure, 2 missing data or environment problem,
64 usage error.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
import time

from . import verify as verify_mod
from ._backend import BACKEND
from .data import load_fashion_mnist, synth_blobs
from .errors import ConfigError, FloraError
from .loradyn import Variant
from .matcore import derive_seed
from .optim import Mode, OptimizerConfig, ParamGroup, Policy, make_optimizer, report_for
from .svg import write_line_plot
from .trainer import MlpModel, PilotConfig, run_pilot, train

EXIT_OK, EXIT_VERIFY, EXIT_DATA, EXIT_USAGE = 0, 1, 2, 64

CSV_SCHEMAS = """\
CSV schemas:
  pilot_curves.csv  variant,step,loss,accuracy
  memreport.csv     rank,mode,param,shape,treatment,params,state,adapter_params,seed_words,overhead,compression_ratio
  run_<hash>.csv    step,loss,accuracy
  kappa_sweep.csv   kappa,run_id,status,final_loss,final_accuracy
"""

PILOT_DEFAULTS = dict(
    synthetic=False, data_dir=None, eta=0.01, rank=8, seed=1, epochs=3, batch_size=32, eval_every=200,
    dims="784,768,768,10", out_dir=".", n_per_class=800, separation=12.0, noise=1.0, train_other_layers=False,
)
TRAIN_DEFAULTS = dict(
    synthetic=False, data_dir=None, mode="sgd_flora_momentum", eta=0.01, rank=8, tau=1, kappa="1000", beta=0.9,
    seed=1, epochs=3, batch_size=32, eval_every=100, dims="784,768,768,10", out_dir=".", n_per_class=800,
    separation=12.0, noise=1.0, lora_state="none", lora_eta=None, lora_freeze_a=False,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _flag(p, name, **kw):
    p.add_argument(name, action="store_const", const=True, default=None, **kw)


def _common_data(p):
    _flag(p, "--synthetic", help="use Gaussian blobs instead of Fashion-MNIST")
    p.add_argument("--data-dir", help="Fashion-MNIST IDX directory (default: $FLORA_DATA_DIR)")
    p.add_argument("--n-per-class", type=int, help="synthetic examples per class (1/4 held out)")
    p.add_argument("--separation", type=float, help="synthetic class-mean distance from origin")
    p.add_argument("--noise", type=float, help="synthetic per-coordinate noise std")
    p.add_argument("--dims", help="comma-separated layer widths, e.g. 784,768,768,10")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--eval-every", type=int, help="steps between evaluation records")
    p.add_argument("--seed", type=int)
    p.add_argument("--eta", type=float, help="learning rate")
    p.add_argument("--rank", type=int, help="projection / adapter rank r")
    p.add_argument("--out-dir")
    p.add_argument("--config", help="flat key=value file; flags override it")


def build_parser():
    parser = _Parser(prog="flora", description=__doc__, epilog=CSV_SCHEMAS, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("pilot", help="LoRA / LoRA(B) / RP / RRP / full SGD comparison", epilog=CSV_SCHEMAS,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _common_data(p)
    _flag(p, "--train-other-layers", help="also train unpatched layers with plain SGD")

    p = sub.add_parser("verify", help="run the property suite")
    p.add_argument("--only", help="comma-separated check names: " + ",".join(verify_mod.CHECKS))
    p.add_argument("--steps", type=int, default=50, help="max LoRA steps per configuration in the theorem1 check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", choices=["momentum-transfer"], help=argparse.SUPPRESS)

    p = sub.add_parser("memreport", help="optimizer-state scalar counts per mode", epilog=CSV_SCHEMAS,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--shape", action="append", help="2-D parameter NxM (repeatable, default 768x768)")
    p.add_argument("--vector", action="append", type=int, help="1-D parameter length (repeatable)")
    p.add_argument("--ranks", default="8,32,128,256")
    p.add_argument("--lora-state", default="momentum", choices=["none", "momentum", "accum"])
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("train", help="train the MLP with one optimizer mode (kappa sweep supported)",
                       epilog=CSV_SCHEMAS, formatter_class=argparse.RawDescriptionHelpFormatter)
    _common_data(p)
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--tau", type=int, help="accumulation steps")
    p.add_argument("--kappa", help="resampling interval(s), comma-separated; 'inf' never resamples")
    p.add_argument("--beta", type=float, help="momentum decay")
    p.add_argument("--lora-state", choices=["none", "momentum", "accum"])
    p.add_argument("--lora-eta", type=float)
    _flag(p, "--lora-freeze-a")
    return parser


def _read_config(path, parser):
    actions = {a.dest: a for a in parser._actions}
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            action = actions.get(key)
            if action is None or key == "config":
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            if isinstance(action, argparse._StoreConstAction):
                out[key] = value.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                try:
                    out[key] = action.type(value)
                except ValueError as exc:
                    raise UsageError(f"{path}:{lineno}: {exc}") from exc
            else:
                out[key] = value
    return out


def _resolve(args, parser, defaults):
    """Effective config: flags > config file > defaults."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        cfg.update(_read_config(args.config, parser))
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _dims(text):
    try:
        dims = tuple(int(d) for d in str(text).split(","))
    except ValueError:
        raise UsageError(f"invalid --dims {text!r}") from None
    if len(dims) < 2 or min(dims) < 1:
        raise UsageError(f"invalid --dims {text!r}")
    return dims


def _datasets(cfg, dims):
    if cfg["synthetic"]:
        ds = synth_blobs(derive_seed(cfg["seed"], 11), cfg["n_per_class"], dims[0], dims[-1],
                         separation=cfg["separation"], noise=cfg["noise"])
        n_test = len(ds) // 4
        return ds.subset(range(len(ds) - n_test)), ds.subset(range(len(ds) - n_test, len(ds)))
    data_dir = cfg["data_dir"] or os.environ.get("FLORA_DATA_DIR")
    if not data_dir:
        raise FileNotFoundError("no dataset: pass --synthetic, --data-dir, or set FLORA_DATA_DIR")
    train_set, test_set = load_fashion_mnist(data_dir)
    if train_set.dim != dims[0] or train_set.n_classes != dims[-1]:
        raise UsageError(f"--dims {dims} do not match data (dim {train_set.dim}, {train_set.n_classes} classes)")
    return train_set, test_set


def _fmt(x):
    return f"{x:.10g}"


def write_pilot_csv(path, records):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["variant", "step", "loss", "accuracy"])
        for r in records:
            w.writerow([r.variant, r.step, _fmt(r.loss), _fmt(r.accuracy)])


def cmd_pilot(args, parser):
    cfg = _resolve(args, parser, PILOT_DEFAULTS)
    dims = _dims(cfg["dims"])
    train_set, test_set = _datasets(cfg, dims)
    print("effective config: " + json.dumps(cfg, sort_keys=True))
    pc = PilotConfig(eta=cfg["eta"], rank=cfg["rank"], seed=cfg["seed"], epochs=cfg["epochs"],
                     batch_size=cfg["batch_size"], dims=dims, eval_every=cfg["eval_every"],
                     train_other_layers=bool(cfg["train_other_layers"]))
    records = run_pilot(pc, train_set, test_set)
    os.makedirs(cfg["out_dir"], exist_ok=True)
    csv_path = os.path.join(cfg["out_dir"], "pilot_curves.csv")
    write_pilot_csv(csv_path, records)
    series = {}
    for r in records:
        series.setdefault(r.variant, []).append((r.step, 100.0 * r.accuracy))
    write_line_plot(os.path.join(cfg["out_dir"], "pilot.svg"), series,
                    title=f"eta={pc.eta}, r={pc.rank}", xlabel="step", ylabel="test accuracy (%)")
    for v in Variant:
        final = [r for r in records if r.variant == v.value][-1]
        print(f"{v.value:10s} step {final.step:6d}  loss {final.loss:.4f}  accuracy {100 * final.accuracy:6.2f}%")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_verify(args, parser):
    only = [s for s in args.only.split(",") if s] if args.only else None
    try:
        results = verify_mod.run_suite(only, seed=args.seed, steps=args.steps, fault=args.inject_fault)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    width = max(len(r.name) for r in results)
    failed = []
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print(f"{r.name:<{width}}  {status}  {r.detail}")
        if not r.ok:
            failed.append(r)
    if failed:
        for r in failed:
            print(f"failed: {r.name} (seed={r.seed})", file=sys.stderr)
        return EXIT_VERIFY
    print(f"all {len(results)} checks passed (kernel backend: {BACKEND})")
    return EXIT_OK


def _shape(text):
    try:
        n, m = (int(s) for s in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"invalid --shape {text!r}; expected NxM") from None
    if n < 1 or m < 1:
        raise UsageError(f"invalid --shape {text!r}")
    return n, m


MEMREPORT_MODES = (Mode.SGD, Mode.SGD_NAIVE_MOMENTUM, Mode.SGD_FLORA_MOMENTUM, Mode.ACCUM_NAIVE, Mode.ACCUM_FLORA,
                   Mode.LORA_ADAPTER)


def cmd_memreport(args, parser):
    shapes = [_shape(s) for s in (args.shape or ["768x768"])]
    vectors = args.vector or []
    if any(v < 1 for v in vectors):
        raise UsageError("--vector lengths must be positive")
    try:
        ranks = [int(r) for r in args.ranks.split(",")]
    except ValueError:
        raise UsageError(f"invalid --ranks {args.ranks!r}") from None
    groups = [ParamGroup(f"W{i}", s, Policy.COMPRESSED) for i, s in enumerate(shapes)]
    groups += [ParamGroup(f"v{i}", (n,), Policy.NAIVE) for i, n in enumerate(vectors)]
    rows = []
    print(f"{'rank':>5} {'mode':<20} {'state':>10} {'overhead':>10} {'matrix ratio':>12} {'total':>10}")
    for r in ranks:
        if r < 1:
            raise UsageError("ranks must be positive")
        counts = {}
        for mode in MEMREPORT_MODES:
            cfg = OptimizerConfig(mode, rank=r, tau=16, lora_state=args.lora_state)
            rep = report_for(groups, cfg)
            counts[mode] = rep
            for e in rep.entries:
                rows.append([r, mode.value, e.id, "x".join(map(str, e.shape)), e.treatment, e.params, e.state,
                             e.adapter_params, e.seed_words, e.overhead, _fmt(e.compression_ratio)])
        for mode in MEMREPORT_MODES:
            rep = counts[mode]
            ratio, total = "-", "-"
            if mode in (Mode.SGD_FLORA_MOMENTUM, Mode.ACCUM_FLORA):
                matrix = [e.compression_ratio for e in rep.entries if e.treatment == "compressed"]
                naive = counts[Mode.ACCUM_NAIVE if mode is Mode.ACCUM_FLORA else Mode.SGD_NAIVE_MOMENTUM].state
                ratio = ",".join(sorted({f"{x:.4g}x" for x in matrix})) or "-"
                total = f"{naive / rep.state:.4g}x"
            print(f"{r:>5} {mode.value:<20} {rep.state:>10} {rep.overhead:>10} {ratio:>12} {total:>10}")
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "memreport.csv")
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["rank", "mode", "param", "shape", "treatment", "params", "state", "adapter_params", "seed_words",
                    "overhead", "compression_ratio"])
        w.writerows(rows)
    print(f"wrote {path}")
    return EXIT_OK


def _kappas(text):
    out = []
    for part in str(text).split(","):
        part = part.strip().lower()
        if part in ("inf", "none"):
            out.append(None)
            continue
        try:
            k = int(part)
        except ValueError:
            raise UsageError(f"invalid --kappa value {part!r}") from None
        if k < 1:
            raise UsageError("--kappa values must be >= 1")
        out.append(k)
    return out


def run_id(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _report_json(rep):
    return {
        "mode": rep.mode.value, "rank": rep.rank, "params": rep.params, "grads": rep.grads, "state": rep.state,
        "adapter_params": rep.adapter_params, "seed_words": rep.seed_words, "overhead": rep.overhead,
        "entries": [
            {"id": e.id, "shape": list(e.shape), "treatment": e.treatment, "params": e.params, "state": e.state,
             "adapter_params": e.adapter_params, "seed_words": e.seed_words, "compression_ratio": e.compression_ratio}
            for e in rep.entries
        ],
    }


def cmd_train(args, parser):
    cfg = _resolve(args, parser, TRAIN_DEFAULTS)
    dims = _dims(cfg["dims"])
    kappas = _kappas(cfg["kappa"])
    train_set, test_set = _datasets(cfg, dims)
    print("effective config: " + json.dumps(cfg, sort_keys=True))
    os.makedirs(cfg["out_dir"], exist_ok=True)
    summary = []
    for kappa in kappas:
        snapshot = dict(cfg, kappa=kappa, dims=list(dims))
        snapshot.pop("out_dir")
        snapshot.pop("config", None)
        rid = run_id(snapshot)
        model = MlpModel(dims, seed=derive_seed(cfg["seed"], 101))
        opt_cfg = OptimizerConfig(cfg["mode"], eta=cfg["eta"], rank=cfg["rank"], tau=cfg["tau"], kappa=kappa,
                                  beta=cfg["beta"], run_seed=derive_seed(cfg["seed"], 202),
                                  lora_eta=cfg["lora_eta"], lora_freeze_a=bool(cfg["lora_freeze_a"]),
                                  lora_state=cfg["lora_state"])
        optimizer = make_optimizer(model.param_groups(compress=True), opt_cfg)
        result = train(model, optimizer, train_set, test_set, cfg["epochs"], cfg["batch_size"],
                       derive_seed(cfg["seed"], 303), eval_every=cfg["eval_every"], clock=time.perf_counter)
        with open(os.path.join(cfg["out_dir"], f"run_{rid}.csv"), "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["step", "loss", "accuracy"])
            for rec in result.records:
                w.writerow([rec.step, _fmt(rec.loss), _fmt(rec.accuracy)])
        record = {
            "run_id": rid, "config": snapshot, "status": result.status,
            "memory": _report_json(optimizer.memory_report()),
            "allocated_state_scalars": optimizer.allocated_state_scalars(),
            "metrics": [{"step": r.step, "loss": r.loss, "accuracy": r.accuracy, "wall_ms": r.wall_ms}
                        for r in result.records],
        }
        with open(os.path.join(cfg["out_dir"], f"run_{rid}.json"), "w", encoding="utf-8") as f:
            json.dump(record, f, indent=2, sort_keys=True)
        final = result.records[-1]
        label = "inf" if kappa is None else str(kappa)
        summary.append([label, rid, result.status, _fmt(final.loss), _fmt(final.accuracy)])
        print(f"kappa={label:>6} run {rid} [{result.status}] loss {final.loss:.4f} accuracy {100 * final.accuracy:6.2f}%"
              f"  state scalars {optimizer.allocated_state_scalars()}")
    if len(kappas) > 1:
        with open(os.path.join(cfg["out_dir"], "kappa_sweep.csv"), "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["kappa", "run_id", "status", "final_loss", "final_accuracy"])
            w.writerows(summary)
    return EXIT_OK


COMMANDS = {"pilot": cmd_pilot, "verify": cmd_verify, "memreport": cmd_memreport, "train": cmd_train}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        return COMMANDS[args.command](args, sub)
    except UsageError as exc:
        print(f"flora {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"flora {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, OSError) as exc:
        print(f"flora {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloraError as exc:
        print(f"flora {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
