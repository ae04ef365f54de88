"""Command-line entry point.

    dynkd train-teacher <cfg>
    dynkd distill <cfg>
    dynkd scan-alpha <teacher.dkd> <student.dkd> <dataset-spec> <T> <out.csv> [--points N]
    dynkd eval <ckpt.dkd> <dataset-spec>
    dynkd reparam <in.dkd> <out.dkd>

Configs are ``key = value`` lines with ``#`` comments. Dataset specs are
``blobs:m,n,d,spread[,n_test[,data_seed]]`` (n and n_test per class) or
``idx:images,labels[,test_images,test_labels]``.

Exit codes: 0 success, 1 config error, 2 I/O error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .controller import EntropyController, Mode, reparameterize
from .data import Dataset, load_idx, synth_blobs
from .errors import ConfigError, DataFormatError, NumericalError, ReparamError
from .landscape import default_grid, scan_alpha, write_curve
from .metrics import write_metrics
from .nn import predict_logits
from .trainer import DistillConfig, distill, evaluate, train_teacher

log = logging.getLogger("dynkd")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULT_DATASET = "blobs:10,500,32,0.6"


@dataclass
class DataSplits:
    train: Dataset
    test: Dataset | None = None

    @property
    def eval_set(self) -> Dataset:
        return self.test if self.test is not None else self.train


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _ints(text: str, what: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated integers, got {text!r}") from None


def parse_dataset_spec(spec: str) -> DataSplits:
    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "blobs":
        vals = _floats(rest, "blobs spec")
        if not 4 <= len(vals) <= 6:
            raise ConfigError(f"blobs spec needs m,n,d,spread[,n_test[,data_seed]], got {spec!r}")
        m, n, d = int(vals[0]), int(vals[1]), int(vals[2])
        spread = vals[3]
        n_test = int(vals[4]) if len(vals) > 4 else max(1, n // 5)
        seed = int(vals[5]) if len(vals) > 5 else 0
        try:
            train = synth_blobs(seed, m, n, d, spread, "blobs-train")
            test = synth_blobs(seed + 1, m, n_test, d, spread, "blobs-test") if n_test > 0 else None
        except ValueError as exc:
            raise ConfigError(f"blobs spec: {exc}") from None
        return DataSplits(train, test)
    if kind == "idx":
        paths = [p.strip() for p in rest.split(",")]
        if len(paths) not in (2, 4) or not all(paths):
            raise ConfigError(f"idx spec needs images,labels[,test_images,test_labels], got {spec!r}")
        train = load_idx(paths[0], paths[1])
        test = None
        if len(paths) == 4:
            test = load_idx(paths[2], paths[3])
            if test.class_count != train.class_count or test.dim != train.dim:
                # widen to the larger label range so both splits agree
                k = max(test.class_count, train.class_count)
                train = load_idx(paths[0], paths[1], k)
                test = load_idx(paths[2], paths[3], k)
        return DataSplits(train, test)
    raise ConfigError(f"unknown dataset kind {kind!r} in {spec!r} (expected blobs: or idx:)")


@dataclass
class RunConfig:
    dataset: str = DEFAULT_DATASET
    teacher_dims: list[int] | None = None  # default [d, 128, 64, m]
    student_dims: list[int] | None = None  # default [d, 16, m]
    out_dir: str = "out"
    teacher_ckpt: str | None = None  # default <out_dir>/teacher.dkd
    scan_epochs: str = ""
    train: DistillConfig = field(default_factory=DistillConfig)

    def scan_epoch_list(self) -> tuple[int, ...]:
        out = set()
        for tok in self.scan_epochs.split(","):
            tok = tok.strip().lower()
            if not tok:
                continue
            if tok == "final":
                if self.train.epochs > 0:
                    out.add(self.train.epochs - 1)
                continue
            try:
                e = int(tok)
            except ValueError:
                raise ConfigError(f"scan_epochs: bad entry {tok!r}") from None
            if not 0 <= e < self.train.epochs:
                raise ConfigError(f"scan_epochs: epoch {e} outside [0, {self.train.epochs})")
            out.add(e)
        return tuple(sorted(out))


_TRAIN_KEYS = {
    "mode": str,
    "temperature": float,
    "beta": float,
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "momentum": float,
    "weight_decay": float,
    "lr_drop_factor": float,
    "alpha_init": float,
    "alpha_min": float,
    "alpha_max": float,
    "seed": int,
}
_RUN_KEYS = {"dataset", "teacher_dims", "student_dims", "out_dir", "teacher_ckpt", "scan_epochs", "lr_drops"}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
        if key not in _TRAIN_KEYS and key not in _RUN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value

    kwargs = {}
    for key, typ in _TRAIN_KEYS.items():
        if key in raw:
            try:
                kwargs[key] = typ(raw[key])
            except ValueError:
                raise ConfigError(f"{source}: {key}: cannot parse {raw[key]!r} as {typ.__name__}") from None
    if "lr_drops" in raw:
        kwargs["lr_drop_epochs"] = tuple(_ints(raw["lr_drops"], "lr_drops"))
    try:
        train = DistillConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None

    cfg = RunConfig(train=train)
    cfg.dataset = raw.get("dataset", cfg.dataset)
    cfg.out_dir = raw.get("out_dir", cfg.out_dir)
    cfg.teacher_ckpt = raw.get("teacher_ckpt") or None
    cfg.scan_epochs = raw.get("scan_epochs", "")
    for key in ("teacher_dims", "student_dims"):
        if key in raw:
            dims = _ints(raw[key], key)
            if len(dims) < 2 or min(dims) < 1:
                raise ConfigError(f"{source}: {key} needs at least two positive widths")
            setattr(cfg, key, dims)
    cfg.train.landscape_scan_epochs = cfg.scan_epoch_list()
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


def _dims(cfg_dims, default, data: Dataset, what: str) -> list[int]:
    dims = list(cfg_dims) if cfg_dims is not None else [data.dim, *default, data.class_count]
    if dims[0] != data.dim or dims[-1] != data.class_count:
        raise ConfigError(f"{what} {dims} does not match dataset (dim {data.dim}, {data.class_count} classes)")
    return dims


def cmd_train_teacher(cfg_path) -> int:
    cfg = load_config(cfg_path)
    data = parse_dataset_spec(cfg.dataset)
    dims = _dims(cfg.teacher_dims, (128, 64), data.train, "teacher_dims")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params, metrics = train_teacher(cfg.train, dims, data.train, data.test)
    tc = cfg.train
    save_checkpoint(out / "teacher.dkd", Checkpoint(params, EntropyController(Mode.NONE), tc.temperature, tc.beta, tc.seed))
    write_metrics(out / "teacher_metrics.csv", metrics)
    print(f"teacher test accuracy={evaluate(params, data.eval_set):.6f}")
    return EXIT_OK


def cmd_distill(cfg_path) -> int:
    cfg = load_config(cfg_path)
    data = parse_dataset_spec(cfg.dataset)
    out = Path(cfg.out_dir)
    teacher_path = Path(cfg.teacher_ckpt) if cfg.teacher_ckpt else out / "teacher.dkd"
    teacher = load_checkpoint(teacher_path).params
    if teacher.layer_dims[0] != data.train.dim or teacher.layer_dims[-1] != data.train.class_count:
        raise ConfigError(f"teacher {teacher.layer_dims} does not match the dataset")
    dims = _dims(cfg.student_dims, (16,), data.train, "student_dims")
    out.mkdir(parents=True, exist_ok=True)

    tc = cfg.train
    res = distill(tc, teacher, dims, data.train, data.test)
    save_checkpoint(out / "student_raw.dkd", Checkpoint(res.student, res.controller, tc.temperature, tc.beta, tc.seed))
    write_metrics(out / "metrics.csv", res.metrics)
    for epoch, curve in sorted(res.curves.items()):
        write_curve(out / f"landscape_epoch{epoch}.csv", curve)
    reparam_path = out / "student_reparam.dkd"
    if res.reparam is not None:
        plain = EntropyController(Mode.NONE, alpha_min=tc.alpha_min, alpha_max=tc.alpha_max)
        save_checkpoint(reparam_path, Checkpoint(res.reparam, plain, tc.temperature, tc.beta, tc.seed))
    else:
        # a leftover from an earlier run in the same out_dir would be mistaken for this run's
        reparam_path.unlink(missing_ok=True)
        if res.reparam_error is not None:
            print(f"note: reparameterization skipped: {res.reparam_error}")
    print(f"student test accuracy={evaluate(res.student, data.eval_set):.6f} controller={res.controller.values()}")
    return EXIT_OK


def cmd_scan_alpha(teacher_path, student_path, dataset_spec, temperature, out_csv, points: int = 400) -> int:
    try:
        T = float(temperature)
    except ValueError:
        raise ConfigError(f"temperature must be a number, got {temperature!r}") from None
    if not T > 0:
        raise ConfigError("temperature must be positive")
    if points < 2:
        raise ConfigError("--points must be at least 2")
    teacher = load_checkpoint(teacher_path).params
    student = load_checkpoint(student_path).params
    data = parse_dataset_spec(dataset_spec).train
    for what, p in (("teacher", teacher), ("student", student)):
        if p.layer_dims[0] != data.dim or p.layer_dims[-1] != data.class_count:
            raise ConfigError(f"{what} {p.layer_dims} does not match dataset (dim {data.dim}, {data.class_count} classes)")
    z_s, z_t = predict_logits(student, data.features), predict_logits(teacher, data.features)
    curve = scan_alpha(z_s, z_t, data.labels, T, default_grid(points))
    write_curve(out_csv, curve)
    print(f"argmin_kl={curve.argmin_kl:.6g} argmin_ce={curve.argmin_ce:.6g}")
    return EXIT_OK


def cmd_eval(ckpt_path, dataset_spec) -> int:
    params = load_checkpoint(ckpt_path).params
    data = parse_dataset_spec(dataset_spec).eval_set
    if params.layer_dims[0] != data.dim:
        raise ConfigError(f"checkpoint input width {params.layer_dims[0]} != dataset dim {data.dim}")
    print(f"accuracy={evaluate(params, data):.6f}")
    return EXIT_OK


def cmd_reparam(in_path, out_path) -> int:
    ckpt = load_checkpoint(in_path)
    folded = reparameterize(ckpt.params, ckpt.controller)
    plain = EntropyController(Mode.NONE)
    save_checkpoint(out_path, Checkpoint(folded, plain, ckpt.temperature, ckpt.beta, ckpt.seed))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynkd", description="Knowledge distillation with a learnable entropy controller.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("train-teacher", help="train the teacher network")
    s.add_argument("config")
    s = sub.add_parser("distill", help="distill a student from a teacher checkpoint")
    s.add_argument("config")
    s = sub.add_parser("scan-alpha", help="sweep the distillation gaps over alpha")
    for name in ("teacher", "student", "dataset", "temperature", "out"):
        s.add_argument(name)
    s.add_argument("--points", type=int, default=400, help="log-spaced grid size on [1e-3, 1e3]; odd sizes include 1")
    s = sub.add_parser("eval", help="print test accuracy of a checkpoint")
    s.add_argument("ckpt")
    s.add_argument("dataset")
    s = sub.add_parser("reparam", help="fold the controller scale into the final layer")
    s.add_argument("ckpt_in")
    s.add_argument("ckpt_out")
    return p


def _dispatch(args) -> int:
    if args.command == "train-teacher":
        return cmd_train_teacher(args.config)
    if args.command == "distill":
        return cmd_distill(args.config)
    if args.command == "scan-alpha":
        return cmd_scan_alpha(args.teacher, args.student, args.dataset, args.temperature, args.out, args.points)
    if args.command == "eval":
        return cmd_eval(args.ckpt, args.dataset)
    return cmd_reparam(args.ckpt_in, args.ckpt_out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _dispatch(args)
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ReparamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
