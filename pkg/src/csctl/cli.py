"""Command-line driver for the full pipeline.

Subcommands: augment, learn-kernels, encode, evaluate, search, run,
report.  Exit codes: 0 success, 2 configuration error, 3 data error.
Configuration can come from a flat key=value file; explicit flags
override file values.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields

from .augment import NoiseSpec, build_source_domain, expand_dataset, extract_toy_features
from .dataio import (
    DataError,
    load_source_features,
    load_target_csv,
    read_wav,
    trials_csv_lines,
    write_feature_rows_csv,
    write_feature_table_csv,
    write_json,
    write_metrics_csv,
    write_report,
    write_wav,
)
from .pipeline import FeatureTable, encode_target, reshape_expand, select_feature_map
from .relief import ReliefParams, ss_ck
from .search import SearchSpace, default_q_grid, run_pipeline, search_optimal_kernel, split_kernel_sets
from .solver import SolverConfig, learn_kernels, load_kernel_bank, save_kernel_bank
from .svm import METRICS_CSV_HEADER, metrics_csv_line


class ConfigError(ValueError):
    """Bad flags or configuration values."""


@dataclass
class RunConfig:
    """Effective configuration of a pipeline run; echoed into reports."""

    variant: str = "cstl_s2"
    source: str | None = None
    target: str | None = None
    out: str = "out"
    lam: float = 1.0
    alpha: float = 0.05
    gamma: float = 1.0
    outer_iters: int = 100
    coding_iters: int = 10
    dict_iters: int = 10
    residual_tol: float = 0.0
    seed: int = 0
    kernels: int = 2
    kernel_size: str = "4x4"
    map_index: int = 1
    q: int | None = None
    r_neighbors: int = 3
    c_param: float = 1.0
    normalize_mode: str = "train-stats"
    map_select: str = "index"
    relief_scope: str = "per_fold"
    kernel_counts: str = "2..8"
    search_seeds: str = "0..9"
    q_grid: str | None = None
    split_ratio: float = 0.5
    split_seed: int | None = None
    h0: int = 13
    threads: int = 0
    no_selection: bool = False
    kernels_from_a1: bool = False

    def solver_config(self) -> SolverConfig:
        try:
            return SolverConfig(
                lam=self.lam,
                alpha=self.alpha,
                gamma=self.gamma,
                outer_iters=self.outer_iters,
                coding_iters=self.coding_iters,
                dict_iters=self.dict_iters,
                residual_tol=self.residual_tol,
                seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def search_space(self) -> SearchSpace:
        try:
            return SearchSpace(
                kernel_counts=_parse_int_list(self.kernel_counts),
                seeds=_parse_int_list(self.search_seeds),
                q_grid=None if self.q_grid is None else _parse_int_list(self.q_grid),
                split_ratio=self.split_ratio,
                split_seed=self.seed if self.split_seed is None else self.split_seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def kernel_shape(self) -> tuple[int, int]:
        try:
            k1, k2 = (int(p) for p in self.kernel_size.lower().split("x"))
            return k1, k2
        except ValueError as exc:
            raise ConfigError(f"kernel_size must look like '4x4', got {self.kernel_size!r}") from exc

    def effective_threads(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    def echo(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _parse_int_list(text: str) -> tuple[int, ...]:
    """Accept '2..8' ranges and '1,2,5' comma lists."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(p) for p in text.split(",") if p != "")


def load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        with open(path) as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}: line {line_no}: expected key = value")
                key, value = line.split("=", 1)
                values[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return values


_BOOL_FIELDS = {"no_selection", "kernels_from_a1"}


def build_run_config(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    cfg = RunConfig()
    valid = {f.name: f for f in fields(RunConfig)}
    for key, raw in file_values.items():
        if key not in valid:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _coerce(key, raw))
    for key in valid:
        flag_value = getattr(args, key, None)
        if flag_value is not None and flag_value is not False:
            setattr(cfg, key, flag_value)
    return cfg


def _coerce(key: str, raw: str):
    target_type = {f.name: f.type for f in fields(RunConfig)}[key]
    if key in _BOOL_FIELDS:
        return raw.lower() in ("1", "true", "yes", "on")
    if raw.lower() in ("none", ""):
        return None
    if "int" in str(target_type):
        return int(raw)
    if "float" in str(target_type):
        return float(raw)
    return raw


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file; flags override")
    parser.add_argument("--variant", choices=("csc_s2", "cstl_s2", "cstlok_s2"))
    parser.add_argument("--source", help="source-domain feature CSV (f1..fN)")
    parser.add_argument("--target", help="target dataset CSV (subject_id,label,f1..fN)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--lambda", dest="lam", type=float, help="data-fit weight of the splitting")
    parser.add_argument("--alpha", type=float, help="shrinkage threshold")
    parser.add_argument("--gamma", type=float, help="relaxation factor in (0, 2]")
    parser.add_argument("--outer-iters", dest="outer_iters", type=int)
    parser.add_argument("--coding-iters", dest="coding_iters", type=int)
    parser.add_argument("--dict-iters", dest="dict_iters", type=int)
    parser.add_argument("--residual-tol", dest="residual_tol", type=float)
    parser.add_argument("--seed", type=int, help="controls all randomness")
    parser.add_argument("--kernels", type=int, help="kernel count for non-search variants")
    parser.add_argument("--kernel-size", dest="kernel_size", help="e.g. 4x4 or 8x8")
    parser.add_argument("--map-index", dest="map_index", type=int)
    parser.add_argument("--q", type=int, help="selected feature count")
    parser.add_argument("--r-neighbors", dest="r_neighbors", type=int)
    parser.add_argument("--c-param", dest="c_param", type=float)
    parser.add_argument("--normalize-mode", dest="normalize_mode", choices=("train-stats", "all-rows"))
    parser.add_argument("--map-select", dest="map_select", choices=("index", "concat"))
    parser.add_argument("--relief-scope", dest="relief_scope", choices=("per_fold", "global"))
    parser.add_argument("--kernel-counts", dest="kernel_counts", help="search range, e.g. 2..8 or 2,4,8")
    parser.add_argument("--search-seeds", dest="search_seeds", help="seed list, e.g. 0..9")
    parser.add_argument("--q-grid", dest="q_grid", help="comma list of Q values")
    parser.add_argument("--split-ratio", dest="split_ratio", type=float)
    parser.add_argument("--split-seed", dest="split_seed", type=int)
    parser.add_argument("--h0", type=int, help="rows per source block")
    parser.add_argument("--threads", type=int, help="worker pool size; 1 reproduces serial results")
    parser.add_argument("--no-selection", dest="no_selection", action="store_true", default=None)
    parser.add_argument("--kernels-from-a1", dest="kernels_from_a1", action="store_true", default=None)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csctl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_aug = sub.add_parser("augment", help="expand WAV signals with noise at fixed SNRs")
    p_aug.add_argument("--signals", required=True, help="directory of mono WAV signals")
    p_aug.add_argument("--noise", required=True, help="directory of mono WAV noise recordings")
    p_aug.add_argument("--snr", required=True, help="comma list of SNR levels in dB, e.g. -5,0,5,10,20")
    p_aug.add_argument("--features-out", help="write toy feature rows (f1..fN) to this CSV")
    p_aug.add_argument("--n-features", type=int, default=26)
    p_aug.add_argument("--frame-len", type=int, default=256)
    p_aug.add_argument("--wav-out", help="also write the mixed signals to this directory")

    p_learn = sub.add_parser("learn-kernels", help="learn a kernel bank from source features")
    p_learn.add_argument("--source", required=True)
    p_learn.add_argument("--h0", type=int, required=True)
    p_learn.add_argument("--out", required=True, help="bank payload path (sidecar JSON added)")
    _add_common_solver_flags(p_learn)
    p_learn.add_argument("--kernels", type=int, default=2)
    p_learn.add_argument("--kernel-size", dest="kernel_size", default="4x4")

    p_enc = sub.add_parser("encode", help="encode a target dataset into expanded feature rows")
    p_enc.add_argument("--bank", required=True)
    p_enc.add_argument("--target", required=True)
    p_enc.add_argument("--out", required=True, help="feature table CSV (subject_id,label,g1..gN0)")
    p_enc.add_argument("--map-index", dest="map_index", type=int, default=1)
    _add_common_solver_flags(p_enc)

    p_eval = sub.add_parser("evaluate", help="run the combined selection+classification evaluation")
    p_eval.add_argument("--bank", required=True)
    p_eval.add_argument("--target", required=True)
    p_eval.add_argument("--map-index", dest="map_index", type=int, default=1)
    p_eval.add_argument("--q", type=int)
    p_eval.add_argument("--r-neighbors", dest="r_neighbors", type=int, default=3)
    p_eval.add_argument("--c-param", dest="c_param", type=float, default=1.0)
    p_eval.add_argument("--normalize-mode", dest="normalize_mode", default="train-stats")
    p_eval.add_argument("--map-select", dest="map_select", default="index")
    p_eval.add_argument("--relief-scope", dest="relief_scope", default="per_fold")
    p_eval.add_argument("--out", help="metrics JSON path (stdout if omitted)")
    _add_common_solver_flags(p_eval)

    p_search = sub.add_parser("search", help="seeded kernel search on the optimization split")
    _add_run_flags(p_search)

    p_run = sub.add_parser("run", help="full pipeline for one variant")
    _add_run_flags(p_run)

    p_rep = sub.add_parser("report", help="re-render a report JSON into CSV tables")
    p_rep.add_argument("--report", required=True)
    p_rep.add_argument("--out", required=True, help="output directory")
    return parser


def _add_common_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda", dest="lam", type=float, default=1.0)
    parser.add_argument("--alpha", type=float, default=0.05)
    parser.add_argument("--gamma", type=float, default=1.0)
    parser.add_argument("--outer-iters", dest="outer_iters", type=int, default=100)
    parser.add_argument("--coding-iters", dest="coding_iters", type=int, default=10)
    parser.add_argument("--dict-iters", dest="dict_iters", type=int, default=10)
    parser.add_argument("--residual-tol", dest="residual_tol", type=float, default=0.0)
    parser.add_argument("--seed", type=int, default=0)


def _solver_from_args(args) -> SolverConfig:
    try:
        return SolverConfig(
            lam=args.lam,
            alpha=args.alpha,
            gamma=args.gamma,
            outer_iters=args.outer_iters,
            coding_iters=args.coding_iters,
            dict_iters=args.dict_iters,
            residual_tol=args.residual_tol,
            seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _list_wavs(directory: str) -> list[str]:
    if not os.path.isdir(directory):
        raise ConfigError(f"not a directory: {directory}")
    return sorted(
        os.path.join(directory, name) for name in os.listdir(directory) if name.lower().endswith(".wav")
    )


def cmd_augment(args) -> int:
    signal_paths = _list_wavs(args.signals)
    noise_paths = _list_wavs(args.noise)
    if not signal_paths:
        raise DataError(f"{args.signals}: no WAV files found")
    if not noise_paths:
        raise DataError(f"{args.noise}: no WAV files found")
    try:
        snrs = [float(s) for s in args.snr.split(",") if s != ""]
    except ValueError as exc:
        raise ConfigError(f"bad --snr list {args.snr!r}") from exc
    if not snrs:
        raise ConfigError("--snr list is empty")
    signals = [read_wav(p) for p in signal_paths]
    noises = [read_wav(p) for p in noise_paths]
    bank = [NoiseSpec(noise, snr) for noise in noises for snr in snrs]
    mixed = expand_dataset(signals, bank)
    if args.wav_out:
        os.makedirs(args.wav_out, exist_ok=True)
        for i, sig in enumerate(mixed):
            write_wav(os.path.join(args.wav_out, f"mix{i:05d}.wav"), sig)
    if args.features_out:
        rows = [extract_toy_features(sig, args.n_features, frame_len=args.frame_len) for sig in mixed]
        write_feature_rows_csv(rows, args.features_out)
    print(f"augment: {len(signals)} signals x {len(bank)} noise specs -> {len(mixed)} mixed signals")
    return 0


def cmd_learn_kernels(args) -> int:
    cfg = _solver_from_args(args)
    source = load_source_features(args.source, args.h0)
    if source.blocks.shape[0] == 0:
        raise DataError(f"{args.source}: {source.blocks.shape[0]} blocks after grouping by h0={args.h0}")
    k1, k2 = (int(p) for p in args.kernel_size.lower().split("x"))
    bank = learn_kernels(source, args.kernels, (k1, k2), cfg)
    save_kernel_bank(bank, args.out, seed=cfg.seed, config=cfg)
    print(f"learn-kernels: {bank.k} kernels {bank.support} on blocks {bank.padded_shape} -> {args.out}")
    return 0


def cmd_encode(args) -> int:
    cfg = _solver_from_args(args)
    bank, _ = load_kernel_bank(args.bank)
    target = load_target_csv(args.target)
    stacks = encode_target(target, bank, cfg)
    selected = [select_feature_map(s, args.map_index) for s in stacks]
    rows = reshape_expand(selected)
    write_feature_table_csv(FeatureTable(rows, target.labels, target.subject_ids), args.out)
    print(f"encode: {target.m} subjects -> {rows.shape[1]} features each -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _solver_from_args(args)
    bank, _ = load_kernel_bank(args.bank)
    target = load_target_csv(args.target)
    n0 = target.h0 * target.n
    q = args.q if args.q is not None else max(1, n0 // 4)
    metrics = ss_ck(
        bank,
        target,
        args.map_index,
        ReliefParams(args.r_neighbors, q),
        cfg,
        c_param=args.c_param,
        normalize_mode=args.normalize_mode,
        map_select=args.map_select,
        relief_scope=args.relief_scope,
    )
    payload = metrics.to_dict()
    if args.out:
        write_json(payload, args.out)
    print(json.dumps(payload, sort_keys=True))
    print(METRICS_CSV_HEADER)
    print(metrics_csv_line(metrics))
    return 0


def _load_run_inputs(cfg: RunConfig):
    if cfg.target is None:
        raise ConfigError("--target is required")
    target = load_target_csv(cfg.target)
    source = None
    if cfg.variant in ("cstl_s2", "cstlok_s2") and not cfg.kernels_from_a1:
        if cfg.source is None:
            raise ConfigError(f"variant {cfg.variant} requires --source")
        source = load_source_features(cfg.source, cfg.h0)
    elif cfg.source is not None:
        source = load_source_features(cfg.source, cfg.h0)
    return source, target


def cmd_run(args) -> int:
    cfg = build_run_config(args)
    if cfg.variant == "cstlok_s2" and cfg.kernels_from_a1 and cfg.source is None:
        pass  # literal mode learns from the optimization split itself
    source, target = _load_run_inputs(cfg)
    report = run_pipeline(
        cfg.variant,
        source,
        target,
        cfg.search_space(),
        cfg.solver_config(),
        kernel_size=cfg.kernel_shape(),
        kernel_count=cfg.kernels,
        map_index=cfg.map_index,
        q=cfg.q,
        r_neighbors=cfg.r_neighbors,
        c_param=cfg.c_param,
        normalize_mode=cfg.normalize_mode,
        map_select=cfg.map_select,
        relief_scope=cfg.relief_scope,
        kernels_from_a1=cfg.kernels_from_a1,
        no_selection=cfg.no_selection,
        threads=cfg.effective_threads(),
        config_echo=cfg.echo(),
    )
    paths = write_report(report, cfg.out)
    acc = report.metrics.accuracy
    print(f"run: variant={cfg.variant} accuracy={'n/a' if acc is None else f'{100 * acc:.1f}%'} -> {paths['report']}")
    return 0


def cmd_search(args) -> int:
    cfg = build_run_config(args)
    if cfg.target is None:
        raise ConfigError("--target is required")
    target = load_target_csv(cfg.target)
    space = cfg.search_space()
    a1, a2 = split_kernel_sets(target, space.split_ratio, space.split_seed)
    if cfg.kernels_from_a1:
        from .search import target_as_source

        source = target_as_source(a1)
    else:
        if cfg.source is None:
            raise ConfigError("search requires --source (or --kernels-from-a1)")
        source = load_source_features(cfg.source, cfg.h0)
    result = search_optimal_kernel(
        source,
        a1,
        space,
        cfg.solver_config(),
        kernel_size=cfg.kernel_shape(),
        r_neighbors=cfg.r_neighbors,
        c_param=cfg.c_param,
        normalize_mode=cfg.normalize_mode,
        map_select=cfg.map_select,
        relief_scope=cfg.relief_scope,
        threads=cfg.effective_threads(),
    )
    os.makedirs(cfg.out, exist_ok=True)
    payload = {
        "selected": result.best.to_dict(),
        "trials": [t.to_dict() for t in result.trials],
        "a1_subjects": list(a1.subject_ids),
        "a2_subjects": list(a2.subject_ids),
        "config": cfg.echo(),
    }
    write_json(payload, os.path.join(cfg.out, "search.json"))
    with open(os.path.join(cfg.out, "trials.csv"), "w") as fh:
        fh.write("\n".join(trials_csv_lines(result.trials)) + "\n")
    best = result.best
    print(
        f"search: best kernel_count={best.kernel_count} map={best.featuremap_index} "
        f"seed={best.seed} q={best.q} a1_accuracy={best.a1_accuracy}"
    )
    return 0


def cmd_report(args) -> int:
    try:
        with open(args.report) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise DataError(f"{args.report}: cannot open ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.report}: invalid JSON ({exc})") from exc
    os.makedirs(args.out, exist_ok=True)
    lines = ["kernel_count,featuremap_index,seed,q,a1_accuracy"]
    for t in payload.get("trials", []):
        acc = t["a1_metrics"]["accuracy"]
        acc_txt = "" if acc is None else f"{100.0 * acc:.1f}"
        lines.append(f"{t['kernel_count']},{t['featuremap_index']},{t['seed']},{t['q']},{acc_txt}")
    with open(os.path.join(args.out, "trials.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    m = payload["metrics"]

    def pct(v):
        return "" if v is None else f"{100.0 * v:.1f}"

    con = m["confusion"]
    with open(os.path.join(args.out, "metrics.csv"), "w") as fh:
        fh.write(METRICS_CSV_HEADER + "\n")
        fh.write(
            f"{pct(m['accuracy'])},{pct(m['sensitivity'])},{pct(m['specificity'])},"
            f"{con['tp']},{con['fn']},{con['tn']},{con['fp']}\n"
        )
    print(f"report: rendered {args.report} -> {args.out}")
    return 0


_COMMANDS = {
    "augment": cmd_augment,
    "learn-kernels": cmd_learn_kernels,
    "encode": cmd_encode,
    "evaluate": cmd_evaluate,
    "search": cmd_search,
    "run": cmd_run,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(sys.argv[1:] if argv is None else list(argv))
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    raise SystemExit(main())
