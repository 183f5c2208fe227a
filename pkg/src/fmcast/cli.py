"""Command line entry point: ``fmcast {gen-data,train,distill,rollout,evaluate}``.

Settings come from an optional ``key = value`` config file (``--config``)
followed by ``key=value`` overrides on the command line. Every run writes
``config.resolved.txt`` into its output directory.

Exit codes: 0 success, 2 invalid configuration or inputs, 3 numerical
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import distill as D
from . import metrics as M
from .dynsys import dataset as dsio
from .dynsys import generators as gen
from .dynsys.fields import Field, Trajectory
from .dynsys.rollout import DeterministicSampler, FlowSampler, OneStepSampler, rollout
from .flowmatch import ArrayPairs, train_deterministic, train_fm, write_loss_csv
from .nncore import checkpoint as ckpt
from .nncore.nets import UNetSpec, build
from .odesolve import SolverConfig

log = logging.getLogger("fmcast")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config parsing


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(p) for p in s.replace(" ", "").split(",") if p)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    help: str = ""


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


ARCH_KEYS = {
    "down_channels": Key(_ints, (32, 64), "UNet channels per level"),
    "time_embed_dim": Key(int, 64),
    "groups_per_norm": Key(int, 8),
}

SCHEMAS: dict[str, dict[str, Key]] = {
    "gen-data": {
        "kind": Key(str, "rotating_blob", "|".join(gen.KINDS)),
        "n_traj": Key(int, 8),
        "length": Key(int, 64),
        "resolution": Key(int, 0, "0 = generator default"),
        "test_fraction": Key(float, 0.0, "> 0 writes train.fmds and test.fmds"),
        "viscosity": Key(float, -1.0, "< 0 = generator default"),
        "noise_scale": Key(float, -1.0, "< 0 = generator default"),
        "dt_sim": Key(float, -1.0, "< 0 = generator default"),
        "width": Key(int, 0),
        "band": Key(int, 0),
    },
    "train": {
        "method": Key(str, "fm", "fm|det"),
        "dataset": Key(str, ""),
        "init": Key(str, "", "optional checkpoint to continue from"),
        "steps": Key(int, 1000),
        "lr": Key(float, 1e-5),
        "batch": Key(int, 8),
        "schedule": Key(str, "constant", "constant|cosine"),
        **ARCH_KEYS,
    },
    "distill": {
        "method": Key(str, "direct", "direct|progressive|rectify|add|wgan"),
        "teacher": Key(str, ""),
        "dataset": Key(str, ""),
        "steps": Key(int, 1000, "updates (per stage for progressive, generator updates for add)"),
        "lr": Key(float, 1e-5),
        "batch": Key(int, 8),
        "schedule": Key(str, "constant"),
        "solver": Key(str, "", "teacher scheme; default midpoint (direct/rectify) or euler (add)"),
        "solver_steps": Key(int, 10),
        "pool_size": Key(int, 0, "teacher coupling cache size, 0 = fresh solves per batch"),
        "n_steps": Key(int, 16, "progressive: initial step count N"),
        "lam": Key(float, 0.5, "add: distillation weight"),
        "gamma": Key(float, 5.0, "add: gradient penalty weight"),
        "d_to_g": Key(int, 5, "add: critic updates per generator update"),
        "lr_g": Key(float, 5e-6),
        "lr_d": Key(float, 5e-5),
        "d_warmup": Key(int, 0),
    },
    "rollout": {
        "ckpt": Key(str, ""),
        "dataset": Key(str, ""),
        "sampler": Key(str, "fm", "fm|onestep|det"),
        "scheme": Key(str, "euler"),
        "solver_steps": Key(int, 10),
        "y0": Key(str, "0", "trajectory indices, comma separated, or 'all'"),
        "ic_step": Key(int, 0),
        "K": Key(int, 10),
        "n_seeds": Key(int, 1),
        "pgm_channels": Key(_ints, (0,), "channels dumped as PGM images; empty disables"),
        "pgm_every": Key(int, 1),
    },
    "evaluate": {
        "real": Key(str, ""),
        "pred": Key(str, "", "rollout output directory"),
        "label": Key(str, "pred"),
        "boundary": Key(str, "periodic", "periodic|replicate"),
    },
}

ADD_ONLY = ("lam", "gamma", "d_to_g", "lr_g", "lr_d", "d_warmup")


def read_config_file(path) -> list[tuple[str, str]]:
    items = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        k, v = line.split("=", 1)
        items.append((k.strip(), v.strip()))
    return items


def resolve(command: str, items: list[tuple[str, str]]) -> tuple[dict[str, Any], set[str]]:
    """Apply ``items`` over the defaults; returns the config and the explicitly set keys."""
    schema = SCHEMAS[command]
    cfg = {k: key.default for k, key in schema.items()}
    given = set()
    for k, raw in items:
        if k not in schema:
            raise ConfigError(f"unknown key {k!r} for {command}; valid keys: {', '.join(sorted(schema))}")
        try:
            cfg[k] = schema[k].parse(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {k!r}: {exc}") from exc
        given.add(k)
    return cfg, given


def write_snapshot(out: Path, command: str, seed: int, cfg: dict) -> None:
    lines = [f"command = {command}", f"seed = {seed}"]
    lines += [f"{k} = {_fmt(cfg[k])}" for k in sorted(cfg)]
    (out / "config.resolved.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# helpers


def _require(cfg, *keys):
    for k in keys:
        if not cfg[k]:
            raise ConfigError(f"{k} is required")


def _claim(out: Path, names, force: bool) -> None:
    for name in names:
        if (out / name).exists() and not force:
            raise FileExistsError(f"{out / name} exists (use --force to overwrite)")


def _load_dataset(path) -> dsio.Dataset:
    try:
        return dsio.load(path)
    except dsio.DatasetError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc


def _load_ckpt(path):
    try:
        params, spec = ckpt.load(path)
    except ckpt.CheckpointError as exc:
        raise OSError(f"cannot read checkpoint {path}: {exc}") from exc
    if spec is None:
        raise ConfigError(f"checkpoint {path} has no architecture sidecar {Path(path).with_suffix('.json')}")
    return params, spec


def _check_spec(spec, ds: dsio.Dataset, what: str) -> None:
    n_phys, n_all = len(ds.physical_channels), len(ds.roles)
    if getattr(spec, "kind", "") != "unet" or spec.in_channels != n_phys or spec.cond_channels != n_all:
        raise ConfigError(f"{what} expects {spec} but the dataset has {n_phys} physical / {n_all} total channels")


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


def write_pgm(path: Path, img: np.ndarray) -> None:
    """8-bit binary PGM, min-max scaled; the scale goes to ``<path>.scale.txt``."""
    lo, hi = float(img.min()), float(img.max())
    span = hi - lo
    px = np.zeros(img.shape, np.uint8) if span == 0 else np.rint(255 * (img - lo) / span).astype(np.uint8)
    h, w = img.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes())
    Path(str(path) + ".scale.txt").write_text(f"min = {lo!r}\nmax = {hi!r}\n")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(cfg, given, seed, out: Path, force: bool) -> int:
    if cfg["n_traj"] < 1:
        raise ConfigError(f"n_traj must be >= 1, got {cfg['n_traj']}")
    if cfg["length"] < 2:
        raise ConfigError(f"length must be >= 2, got {cfg['length']}")
    if cfg["kind"] not in gen.KINDS:
        raise ConfigError(f"unknown kind {cfg['kind']!r}")
    overrides = {}
    for k in ("resolution", "width", "band"):
        if cfg[k] > 0:
            overrides[k] = cfg[k]
    for k in ("viscosity", "noise_scale", "dt_sim"):
        if cfg[k] >= 0:
            overrides[k] = cfg[k]
    spec = gen.GeneratorSpec.default(cfg["kind"], **overrides)
    split = cfg["test_fraction"] > 0
    names = ["train.fmds", "test.fmds"] if split else ["dataset.fmds"]
    _claim(out, names, force)
    trajs = gen.generate(spec, cfg["n_traj"], cfg["length"], _rng(seed, 0))
    if split:
        train, test = dsio.split_train_test(trajs, cfg["test_fraction"], _rng(seed, 1))
        train_ds = dsio.Dataset.from_trajectories(train)
        sets = [("train.fmds", train_ds)]
        if test:
            sets.append(("test.fmds", dsio.Dataset.from_trajectories(test, train_ds.normalizer)))
    else:
        sets = [("dataset.fmds", dsio.Dataset.from_trajectories(trajs))]
    for name, ds in sets:
        dsio.save(out / name, ds)
        print(f"{name}: {ds.n_traj} trajectories, shape {ds.data.shape[1:]} "
              f"(len, C, H, W), dt_sim {ds.dt_sim}")
    norm = sets[0][1].normalizer
    for i, r in enumerate(sets[0][1].roles):
        print(f"  channel {i} {r.name.lower()}: mean {norm.mean[i]:.6g} std {norm.std[i]:.6g}")
    return EXIT_OK


def _net_for(ds: dsio.Dataset, cfg) -> UNetSpec:
    return UNetSpec(in_channels=len(ds.physical_channels), out_channels=len(ds.physical_channels),
                    cond_channels=len(ds.roles), down_channels=cfg["down_channels"],
                    time_embed_dim=cfg["time_embed_dim"], groups_per_norm=cfg["groups_per_norm"])


def cmd_train(cfg, given, seed, out, force) -> int:
    _require(cfg, "dataset")
    if cfg["method"] not in ("fm", "det"):
        raise ConfigError(f"method must be fm or det, got {cfg['method']!r}")
    if cfg["steps"] < 0 or cfg["batch"] < 1:
        raise ConfigError("steps must be >= 0 and batch >= 1")
    _claim(out, ["model.fmck", "loss.csv"], force)
    ds = _load_dataset(cfg["dataset"])
    rng = _rng(seed, 2)
    if cfg["init"]:
        params, spec = _load_ckpt(cfg["init"])
        _check_spec(spec, ds, f"checkpoint {cfg['init']}")
    else:
        spec = _net_for(ds, cfg)
        params = build(spec).init(rng)
    net = build(spec)
    data = ds.pairs()
    fit = train_fm if cfg["method"] == "fm" else train_deterministic
    res = fit(net, data, steps=cfg["steps"], lr=cfg["lr"], batch_size=cfg["batch"], rng=rng,
              params=params, schedule=cfg["schedule"])
    ckpt.save(out / "model.fmck", res.params, spec)
    res.write_csv(out / "loss.csv")
    if res.losses:
        print(f"trained {cfg['method']} for {cfg['steps']} steps; final loss {res.losses[-1]:.6g}")
    return EXIT_OK


def _solver(cfg, default: SolverConfig) -> SolverConfig:
    scheme = cfg["solver"] or default.scheme
    return SolverConfig(scheme, cfg["solver_steps"])


def cmd_distill(cfg, given, seed, out, force) -> int:
    _require(cfg, "teacher", "dataset")
    method = cfg["method"]
    if method not in ("direct", "progressive", "rectify", "add", "wgan"):
        raise ConfigError(f"unknown distillation method {method!r}")
    if method not in ("add", "wgan"):
        stray = sorted(k for k in ADD_ONLY if k in given)
        if stray:
            raise ConfigError(f"{', '.join(stray)} only apply to method=add/wgan, not {method}")
    if method == "wgan":
        if "lam" in given and cfg["lam"] != 0:
            raise ConfigError(f"method=wgan means lam=0; got lam={cfg['lam']}")
        cfg["lam"] = 0.0
    if method != "progressive" and "n_steps" in given:
        raise ConfigError("n_steps only applies to method=progressive")
    ds = _load_dataset(cfg["dataset"])
    params, spec = _load_ckpt(cfg["teacher"])
    _check_spec(spec, ds, f"teacher {cfg['teacher']}")
    net = build(spec)
    data = ds.pairs()
    rng = _rng(seed, 3)
    pool = cfg["pool_size"] or None

    if method in ("direct", "rectify"):
        _claim(out, ["student.fmck", "loss.csv"], force)
        fn = D.direct_distill if method == "direct" else D.rectify
        res = fn(net, params, data, _solver(cfg, D.DISTILL_SOLVER), steps=cfg["steps"], lr=cfg["lr"],
                 batch_size=cfg["batch"], rng=rng, pool_size=pool, schedule=cfg["schedule"])
        ckpt.save(out / "student.fmck", res.params, spec)
        res.write_csv(out / "loss.csv")
    elif method == "progressive":
        n = cfg["n_steps"]
        if n < 2 or n & (n - 1):
            raise ConfigError(f"n_steps must be a power of two >= 2, got {n}")
        ms = [n >> i for i in range(1, n.bit_length())]
        _claim(out, [f"stage_m{m}.fmck" for m in ms], force)
        stages = D.progressive_distill(net, params, data, n_steps=n, steps_per_stage=cfg["steps"],
                                       lr=cfg["lr"], batch_size=cfg["batch"], rng=rng, schedule=cfg["schedule"])
        for st in stages:
            ckpt.save(out / f"stage_m{st.m}.fmck", st.params, spec)
            write_loss_csv(out / f"loss_m{st.m}.csv", st.losses, st.wall_ms)
        print("stages:", ", ".join(f"m={st.m}" for st in stages))
    else:
        _claim(out, ["generator.fmck", "discriminator.fmck", "distill_log.csv"], force)
        try:
            add_cfg = D.AddConfig(lam=cfg["lam"], gamma=cfg["gamma"], d_to_g_ratio=cfg["d_to_g"],
                                  lr_g=cfg["lr_g"], lr_d=cfg["lr_d"], d_warmup=cfg["d_warmup"],
                                  schedule=cfg["schedule"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        res = D.add_train(net, params, data, add_cfg, _solver(cfg, D.ADD_SOLVER), steps=cfg["steps"],
                          batch_size=cfg["batch"], rng=rng)
        ckpt.save(out / "generator.fmck", res.xi, spec)
        ckpt.save(out / "discriminator.fmck", res.zeta, spec)
        res.write_csv(out / "distill_log.csv")
    print(f"distilled with method={method}")
    return EXIT_OK


def _indices(spec: str, n: int) -> list[int]:
    if spec.strip() == "all":
        return list(range(n))
    idx = list(_ints(spec))
    bad = [i for i in idx if not 0 <= i < n]
    if not idx or bad:
        raise ConfigError(f"y0 indices {spec!r} invalid for a dataset with {n} trajectories")
    return idx


def cmd_rollout(cfg, given, seed, out, force) -> int:
    _require(cfg, "ckpt", "dataset")
    if cfg["sampler"] not in ("fm", "onestep", "det"):
        raise ConfigError(f"sampler must be fm, onestep or det, got {cfg['sampler']!r}")
    if cfg["K"] < 0 or cfg["n_seeds"] < 1 or cfg["pgm_every"] < 1:
        raise ConfigError("K must be >= 0, n_seeds >= 1 and pgm_every >= 1")
    ds = _load_dataset(cfg["dataset"])
    params, spec = _load_ckpt(cfg["ckpt"])
    _check_spec(spec, ds, f"checkpoint {cfg['ckpt']}")
    ics = _indices(cfg["y0"], ds.n_traj)
    if cfg["ic_step"] < 0 or cfg["ic_step"] >= ds.length:
        raise ConfigError(f"ic_step {cfg['ic_step']} outside trajectory length {ds.length}")
    bad_ch = [c for c in cfg["pgm_channels"] if not 0 <= c < len(ds.roles)]
    if bad_ch:
        raise ConfigError(f"pgm_channels {bad_ch} out of range")
    _claim(out, ["pred.fmds", "runs.csv"], force)
    net = build(spec)
    if cfg["sampler"] == "fm":
        sampler = FlowSampler(net, params, SolverConfig(cfg["scheme"], cfg["solver_steps"]))
    elif cfg["sampler"] == "det":
        sampler = DeterministicSampler(net, params)
    else:
        sampler = OneStepSampler(D.GeneratorHead(net, params))
    pgm_dir = out / "pgm"
    if cfg["pgm_channels"]:
        pgm_dir.mkdir(exist_ok=True)
    trajs, rows = [], []
    for ic in ics:
        y0 = Field(ds.data[ic, cfg["ic_step"]], ds.roles, cfg["ic_step"] * ds.dt_sim)
        for s in range(cfg["n_seeds"]):
            before = sampler.evaluations
            traj = rollout(sampler, y0, cfg["K"], _rng(seed, 4, ic, s), ds.dt_sim,
                           tau_max=ds.tau_max, normalizer=ds.normalizer)
            evals = sampler.evaluations - before
            rows.append([len(trajs), ic, s, cfg["ic_step"], evals])
            trajs.append(traj)
            for k in range(0, len(traj), cfg["pgm_every"]):
                for c in cfg["pgm_channels"]:
                    write_pgm(pgm_dir / f"ic{ic}_seed{s}_step{k:03d}_ch{c}.pgm", traj[k].channels[c])
    pred = dsio.Dataset(np.stack([t.array() for t in trajs]), ds.roles, ds.dt_sim, ds.normalizer)
    dsio.save(out / "pred.fmds", pred)
    _write_csv(out / "runs.csv", ["run", "traj", "seed", "ic_step", "evaluations"], rows)
    total = sum(r[-1] for r in rows)
    print(f"{len(trajs)} rollouts of {cfg['K']} steps; model evaluations {total} "
          f"({total / max(1, len(trajs) * cfg['K']) if cfg['K'] else 0:g} per step)")
    return EXIT_OK


def _read_runs(path: Path) -> list[dict]:
    with path.open(newline="") as fh:
        return [{k: int(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def cmd_evaluate(cfg, given, seed, out, force) -> int:
    _require(cfg, "real", "pred")
    if cfg["boundary"] not in ("periodic", "replicate"):
        raise ConfigError(f"unknown boundary {cfg['boundary']!r}")
    real = _load_dataset(cfg["real"])
    pred_dir = Path(cfg["pred"])
    pred = _load_dataset(pred_dir / "pred.fmds")
    runs = _read_runs(pred_dir / "runs.csv")
    if len(runs) != pred.n_traj:
        raise ConfigError(f"runs.csv lists {len(runs)} runs but pred.fmds holds {pred.n_traj}")
    if tuple(pred.roles) != tuple(real.roles) or pred.field_shape != real.field_shape:
        raise ConfigError("predicted and real fields have different layouts")
    _claim(out, ["metrics.csv", "spectra.csv"], force)
    per_run = out / "per_run"
    per_run.mkdir(exist_ok=True)
    tables, spec_real, spec_pred = [], [], []
    for run in runs:
        start, length = run["ic_step"], pred.length
        if start + length > real.length:
            raise ConfigError(f"run {run['run']} needs {length} real states from step {start}, "
                              f"trajectory has {real.length}")
        real_traj = Trajectory([Field(real.data[run["traj"], start + k], real.roles, (start + k) * real.dt_sim)
                                for k in range(length)], real.dt_sim)
        pred_traj = pred.trajectory(run["run"])
        table = M.evaluate_rollout(real_traj, pred_traj, cfg["boundary"])
        tables.append(table)
        write_metrics_csv(per_run / f"metrics_run{run['run']}.csv", table)
        spec_real.append([M.energy_spectrum(f).energy_density for f in real_traj.states])
        spec_pred.append([M.energy_spectrum(f).energy_density for f in pred_traj.states])
    write_metrics_csv(out / "metrics.csv", M.average_tables(tables))
    mean_real, mean_pred = np.mean(spec_real, axis=0), np.mean(spec_pred, axis=0)
    rows = []
    for name, spectra in (("real", mean_real), (cfg["label"], mean_pred)):
        for step, dens in enumerate(spectra):
            rows += [[name, step, k, repr(float(d))] for k, d in enumerate(dens)]
    _write_csv(out / "spectra.csv", ["method", "step", "k", "density"], rows)
    print(f"evaluated {len(runs)} runs of length {pred.length}")
    return EXIT_OK


def write_metrics_csv(path: Path, table: list[dict]) -> None:
    _write_csv(path, M.METRIC_COLUMNS,
               [[row["step"]] + [repr(float(row[c])) for c in M.METRIC_COLUMNS[1:]] for row in table])


def read_metrics_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "distill": cmd_distill,
    "rollout": cmd_rollout,
    "evaluate": cmd_evaluate,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value settings file")
    common.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="fmcast", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        keys = ", ".join(sorted(SCHEMAS[name]))
        p = sub.add_parser(name, parents=[common], help=f"{name} (keys: {keys})")
        p.add_argument("overrides", nargs="*", metavar="key=value")
    return parser


def _thread_limit():
    raw = os.environ.get("FMF_THREADS")
    if not raw:
        return None
    n = int(raw)
    if n < 1:
        raise ConfigError(f"FMF_THREADS must be >= 1, got {raw!r}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if not 0 <= args.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {args.seed}")
        items = read_config_file(args.config) if args.config else []
        for ov in args.overrides:
            if "=" not in ov:
                raise ConfigError(f"override {ov!r} is not key=value")
            k, v = ov.split("=", 1)
            items.append((k.strip(), v.strip()))
        cfg, given = resolve(args.command, items)
        limit = _thread_limit()
        args.out.mkdir(parents=True, exist_ok=True)
        try:
            code = COMMANDS[args.command](cfg, given, args.seed, args.out, args.force)
        finally:
            if limit is not None:
                limit.unregister()
        write_snapshot(args.out, args.command, args.seed, cfg)
        return code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
