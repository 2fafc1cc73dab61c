"""Command-line interface for deflection, denoising, defense, and evaluation.

Every subcommand is deterministic given --seed; when no seed is supplied
(by flag, config file, or the DEFLECT_SEED environment variable) one is
drawn and printed to stderr. Each run echoes its effective configuration,
seed included, to a `<output>.config` sidecar so results can be reproduced
exactly. Config files are flat `key=value` lines with `#` comments; flags
override file values.
"""

from __future__ import annotations

import argparse
import os
import secrets
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .attacks import load_classifier, make_attack, save_classifier, train_toy_classifier
from .deflection import DeflectionParams, deflect_targeted, deflect_uniform, write_trace
from .evaluation import (
    GRID_COLUMNS,
    REPORT_COLUMNS,
    evaluate_defense,
    report_row,
    write_records_csv,
    write_report_csv,
    write_report_json,
)
from .images import load_f32grid, load_image, save_image
from .pipeline import (
    ClassifierCamProvider,
    DefenseConfig,
    FileMapProvider,
    StageError,
    defend,
    denoise_image,
    grid_search,
)
from .synthetic import DEFAULT_JITTER, DEFAULT_NOISE, load_manifest, make_synthetic_dataset, write_manifest
from .wavelets import ShrinkageRule, WaveletSpec

SEED_ENV_VAR = "DEFLECT_SEED"

_CONFIG_KEYS = {
    "seed",
    "targeted",
    "window",
    "deflections",
    "k_top",
    "wavelet",
    "levels",
    "rule",
    "selector",
    "sigma",
    "fixed_threshold",
    "ensemble",
}


def parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value
    return values


def _parse_bool(text: str, what: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"{what} must be a boolean, got {text!r}")


def resolve_seed(flag_seed, file_cfg: dict) -> tuple[int, bool]:
    """Seed precedence: flag, config file, DEFLECT_SEED, fresh draw."""
    if flag_seed is not None:
        return int(flag_seed), False
    if "seed" in file_cfg:
        return int(file_cfg["seed"]), False
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        return int(env), False
    return secrets.randbits(32), True


def _load_file_config(args) -> dict[str, str]:
    path = getattr(args, "config", None)
    return parse_config_file(path) if path else {}


def build_defense_config(args, file_cfg: dict) -> tuple[DefenseConfig, bool]:
    """Merge defaults, config file values, and flag overrides.

    Returns the config plus whether targetedness was set explicitly (as
    opposed to defaulted), which `defend` uses to decide between erroring
    and quietly falling back to uniform deflection when no map is given.
    """

    def pick(flag_name: str, file_key: str, convert, default):
        flag_value = getattr(args, flag_name, None)
        if flag_value is not None:
            return flag_value
        if file_key in file_cfg:
            return convert(file_cfg[file_key])
        return default

    levels = pick("levels", "levels", lambda s: None if s == "auto" else int(s), None)
    targeted = pick("targeted", "targeted", lambda s: _parse_bool(s, "targeted"), None)
    cfg = DefenseConfig(
        deflection=DeflectionParams(
            window_apothem=pick("window", "window", int, 10),
            deflections=pick("deflections", "deflections", int, 100),
        ),
        use_targeted=True if targeted is None else targeted,
        k_top=pick("k_top", "k_top", int, 5),
        wavelet=WaveletSpec(family=pick("wavelet", "wavelet", str, "db1"), levels=levels),
        shrinkage=ShrinkageRule(
            kind=pick("rule", "rule", str, "soft"),
            selector=pick("selector", "selector", str, "bayes"),
            sigma=pick("sigma", "sigma", float, 0.04),
            fixed_threshold=pick("fixed_threshold", "fixed_threshold", float, 0.0),
        ),
        ensemble_size=pick("ensemble", "ensemble", int, 10),
    )
    # None means "not set anywhere": remember that for targeted-mode checks.
    cfg_explicit_targeted = targeted is not None
    return cfg, cfg_explicit_targeted


def config_sidecar_lines(cfg: DefenseConfig, seed: int, extra: dict | None = None) -> list[str]:
    values = {
        "seed": seed,
        "targeted": str(cfg.use_targeted).lower(),
        "window": cfg.deflection.window_apothem,
        "deflections": cfg.deflection.deflections,
        "k_top": cfg.k_top,
        "wavelet": cfg.wavelet.family,
        "levels": "auto" if cfg.wavelet.levels is None else cfg.wavelet.levels,
        "rule": cfg.shrinkage.kind,
        "selector": cfg.shrinkage.selector,
        "sigma": cfg.shrinkage.sigma,
        "fixed_threshold": cfg.shrinkage.fixed_threshold,
        "ensemble": cfg.ensemble_size,
    }
    if extra:
        values.update(extra)
    return [f"{key}={values[key]}" for key in sorted(values)]


def write_sidecar(path: str, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _announce_seed(seed: int, drawn: bool) -> None:
    if drawn:
        print(f"seed: {seed} (drawn; pass --seed {seed} to reproduce)", file=sys.stderr)


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip() != ""]


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip() != ""]


# ---------------------------------------------------------------------------
# subcommands


def cmd_deflect(args) -> int:
    file_cfg = {}
    seed, drawn = resolve_seed(args.seed, file_cfg)
    _announce_seed(seed, drawn)
    img = load_image(args.input)
    params = DeflectionParams(window_apothem=args.window, deflections=args.deflections, seed=seed)
    trace = [] if args.trace else None
    if args.map:
        raw = load_f32grid(args.map)[:, :, 0]
        from .activation import resize_map

        amap = np.clip(resize_map(raw, img.shape[0], img.shape[1]), 0.0, 1.0)
        out = deflect_targeted(img, amap, params, trace=trace)
        targeted = True
    else:
        out = deflect_uniform(img, params, trace=trace)
        targeted = False
    save_image(out, args.output)
    if args.trace:
        write_trace(trace, args.trace)
    changed = int(np.count_nonzero(np.any(out != img, axis=2)))
    print(f"deflect: changed {changed} pixel(s) (K={args.deflections})", file=sys.stderr)
    write_sidecar(
        str(args.output) + ".config",
        [
            f"deflections={args.deflections}",
            f"seed={seed}",
            f"targeted={str(targeted).lower()}",
            f"window={args.window}",
        ],
    )
    return 0


def cmd_denoise(args) -> int:
    seed, drawn = resolve_seed(args.seed, {})
    _announce_seed(seed, drawn)
    img = load_image(args.input)
    spec = WaveletSpec(family=args.wavelet, levels=None if args.levels == "auto" else int(args.levels))
    rule = ShrinkageRule(
        kind=args.rule,
        selector=args.selector,
        sigma=args.sigma,
        fixed_threshold=args.fixed_threshold,
    )
    out = denoise_image(img, spec, rule)
    save_image(out, args.output)
    write_sidecar(
        str(args.output) + ".config",
        [
            f"fixed_threshold={args.fixed_threshold}",
            f"levels={args.levels}",
            f"rule={args.rule}",
            f"seed={seed}",
            f"selector={args.selector}",
            f"sigma={args.sigma}",
            f"wavelet={args.wavelet}",
        ],
    )
    return 0


def cmd_defend(args) -> int:
    file_cfg = _load_file_config(args)
    seed, drawn = resolve_seed(args.seed, file_cfg)
    _announce_seed(seed, drawn)
    cfg, explicit_targeted = build_defense_config(args, file_cfg)
    img = load_image(args.input)

    provider = None
    if args.map:
        if explicit_targeted and not cfg.use_targeted:
            raise ValueError("targeted=false conflicts with --map; drop one of them")
        provider = FileMapProvider(args.map)
        cfg = replace(cfg, use_targeted=True)
    elif cfg.use_targeted:
        if explicit_targeted:
            raise ValueError("targeted deflection requires --map")
        cfg = replace(cfg, use_targeted=False)
        print("defend: no activation map given; using uniform deflection", file=sys.stderr)

    started = time.perf_counter()
    out = defend(img, cfg, provider=provider, seed=seed)
    elapsed_ms = 1000.0 * (time.perf_counter() - started)
    save_image(out, args.output)
    write_sidecar(str(args.output) + ".config", config_sidecar_lines(cfg, seed))
    print(f"defend: wrote {args.output} ({elapsed_ms:.0f} ms)", file=sys.stderr)
    return 0


def _make_provider(cfg: DefenseConfig, clf):
    return ClassifierCamProvider(clf, k_top=cfg.k_top) if cfg.use_targeted else None


def cmd_evaluate(args) -> int:
    file_cfg = _load_file_config(args)
    seed, drawn = resolve_seed(args.seed, file_cfg)
    _announce_seed(seed, drawn)
    cfg, _ = build_defense_config(args, file_cfg)
    images, labels = load_manifest(args.manifest)
    clf = load_classifier(args.classifier)
    attack = make_attack(args.attack, epsilon=args.epsilon, alpha=args.alpha, iterations=args.iterations)

    started = time.perf_counter()
    report = evaluate_defense(
        images,
        labels,
        clf,
        attack,
        cfg,
        provider=_make_provider(cfg, clf),
        seed=seed,
        jobs=args.jobs,
    )
    elapsed_ms = 1000.0 * (time.perf_counter() - started)

    row = report_row(report, runtime_ms=int(round(elapsed_ms)) if args.timing else None)
    base = _report_base(args.report)
    write_report_csv([row], base + ".csv", REPORT_COLUMNS)
    write_report_json([row], base + ".json", REPORT_COLUMNS)
    write_records_csv(report.records, base + "_records.csv")
    extra = {
        "attack": args.attack,
        "epsilon": args.epsilon,
        "alpha": args.alpha,
        "iterations": args.iterations,
    }
    write_sidecar(base + ".config", config_sidecar_lines(cfg, seed, extra))
    if not args.no_figures:
        from .figures import render_evaluate_figure

        render_evaluate_figure(row, base + "_summary.png")
    dr = report.destruction_rate
    print(
        f"evaluate: {report.n_images} image(s), attacked {report.attacked_acc:.3f}, "
        f"defended {report.defended_acc:.3f}, destruction rate "
        f"{'undefined' if dr is None else f'{dr:.3f}'} ({elapsed_ms:.0f} ms)",
        file=sys.stderr,
    )
    return 0


def cmd_grid(args) -> int:
    file_cfg = _load_file_config(args)
    seed, drawn = resolve_seed(args.seed, file_cfg)
    _announce_seed(seed, drawn)
    cfg, _ = build_defense_config(args, file_cfg)
    images, labels = load_manifest(args.manifest)
    clf = load_classifier(args.classifier)
    attack = make_attack(args.attack, epsilon=args.epsilon, alpha=args.alpha, iterations=args.iterations)

    rows = grid_search(
        images,
        labels,
        clf,
        attack,
        sigmas=_float_list(args.sigmas),
        windows=_int_list(args.windows),
        deflection_counts=_int_list(args.deflections_grid),
        base_config=cfg,
        provider=_make_provider(cfg, clf),
        seed=seed,
        jobs=args.jobs,
    )
    base = _report_base(args.report)
    write_report_csv(rows, base + ".csv", GRID_COLUMNS)
    write_report_json(rows, base + ".json", GRID_COLUMNS)
    extra = {
        "attack": args.attack,
        "epsilon": args.epsilon,
        "alpha": args.alpha,
        "iterations": args.iterations,
        "grid_sigmas": args.sigmas,
        "grid_windows": args.windows,
        "grid_deflections": args.deflections_grid,
    }
    write_sidecar(base + ".config", config_sidecar_lines(cfg, seed, extra))
    if not args.no_figures:
        from .figures import render_grid_figures

        render_grid_figures(rows, base + "_grid.png")
    failures = [r for r in rows if r.get("error")]
    for r in failures:
        print(
            f"grid: point sigma={r['sigma']} window={r['window']} "
            f"deflections={r['deflections']} failed: {r['error']}",
            file=sys.stderr,
        )
    print(f"grid: wrote {len(rows)} row(s), {len(failures)} failed", file=sys.stderr)
    return 0


def cmd_train_toy(args) -> int:
    seed, drawn = resolve_seed(args.seed, {})
    _announce_seed(seed, drawn)
    if args.synthetic:
        images, labels = make_synthetic_dataset(
            n_images=args.count,
            n_classes=args.classes,
            size=args.size,
            noise=args.noise,
            seed=seed,
        )
    elif args.manifest:
        images, labels = load_manifest(args.manifest)
    else:
        raise ValueError("train-toy needs --manifest or --synthetic")
    clf = train_toy_classifier(
        images, labels, epochs=args.epochs, learning_rate=args.learning_rate, seed=seed
    )
    save_classifier(clf, args.output)
    from .attacks import predict

    acc = sum(1 for img, y in zip(images, labels) if predict(clf, img).top1 == y) / len(labels)
    print(f"train-toy: training accuracy {acc:.3f} on {len(labels)} image(s)", file=sys.stderr)
    write_sidecar(
        str(args.output) + ".config",
        [
            f"classes={int(labels.max()) + 1}",
            f"epochs={args.epochs}",
            f"learning_rate={args.learning_rate}",
            f"seed={seed}",
            f"source={'synthetic' if args.synthetic else args.manifest}",
        ],
    )
    return 0


def cmd_gen_synthetic(args) -> int:
    seed, drawn = resolve_seed(args.seed, {})
    _announce_seed(seed, drawn)
    images, labels = make_synthetic_dataset(
        n_images=args.count,
        n_classes=args.classes,
        size=args.size,
        noise=args.noise,
        brightness_jitter=args.jitter,
        seed=seed,
    )
    manifest = write_manifest(args.outdir, images, labels, image_format=args.format)
    write_sidecar(
        os.path.join(str(args.outdir), "dataset.config"),
        [
            f"classes={args.classes}",
            f"count={args.count}",
            f"format={args.format}",
            f"jitter={args.jitter}",
            f"noise={args.noise}",
            f"seed={seed}",
            f"size={args.size}",
        ],
    )
    print(f"gen-synthetic: wrote {len(labels)} image(s) and {manifest}", file=sys.stderr)
    return 0


def _report_base(path: str) -> str:
    path = str(path)
    return path[: -len(".csv")] if path.endswith(".csv") else path


# ---------------------------------------------------------------------------
# parser


def _add_seed(parser) -> None:
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help=f"RNG seed; falls back to config file, then ${SEED_ENV_VAR}, then a fresh draw",
    )


def _add_overrides(parser) -> None:
    parser.add_argument("--window", type=int, default=None, help="deflection window apothem (default: 10)")
    parser.add_argument("--deflections", type=int, default=None, help="number of deflections K (default: 100)")
    parser.add_argument(
        "--targeted",
        type=lambda s: _parse_bool(s, "--targeted"),
        default=None,
        metavar="{true,false}",
        help="weight deflection by an activation map (default: true when a map source exists)",
    )
    parser.add_argument("--k-top", dest="k_top", type=int, default=None, help="classes in the robust map (default: 5)")
    parser.add_argument("--wavelet", choices=["haar", "db1", "db2"], default=None, help="wavelet family (default: db1)")
    parser.add_argument("--levels", default=None, help="decomposition levels, or 'auto' (default: auto)")
    parser.add_argument("--rule", choices=["none", "hard", "soft"], default=None, help="shrinkage kind (default: soft)")
    parser.add_argument(
        "--selector",
        choices=["bayes", "visu", "sure", "fixed"],
        default=None,
        help="threshold selector (default: bayes)",
    )
    parser.add_argument("--sigma", type=float, default=None, help="noise scale for thresholding (default: 0.04)")
    parser.add_argument(
        "--fixed-threshold", dest="fixed_threshold", type=float, default=None, help="threshold for selector=fixed"
    )
    parser.add_argument("--ensemble", type=int, default=None, help="ensemble size for majority voting (default: 10)")


def _add_attack_flags(parser) -> None:
    parser.add_argument("--attack", choices=["fgsm", "igsm", "none"], default="fgsm", help="attack to evaluate against (default: %(default)s)")
    parser.add_argument("--epsilon", type=float, default=0.03, help="max-norm attack budget (default: %(default)s)")
    parser.add_argument("--alpha", type=float, default=0.0075, help="IGSM step size (default: %(default)s)")
    parser.add_argument("--iterations", type=int, default=10, help="IGSM iteration cap (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pixeldeflect",
        description="Pixel deflection defense: stochastic pixel resampling plus wavelet denoising.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("deflect", help="apply pixel deflection to an image")
    p.add_argument("--input", "-i", required=True, help="input PNG or f32grid image")
    p.add_argument("--output", "-o", required=True, help="output image path")
    p.add_argument("--window", type=int, default=10, help="window apothem r (default: %(default)s)")
    p.add_argument("--deflections", type=int, default=100, help="deflection count K (default: %(default)s)")
    p.add_argument("--map", default=None, help="f32grid activation map; enables targeted deflection")
    p.add_argument("--trace", default=None, help="write per-attempt trace CSV here")
    _add_seed(p)
    p.set_defaults(func=cmd_deflect)

    p = sub.add_parser("denoise", help="wavelet shrinkage denoising (in YCbCr for color images)")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--wavelet", choices=["haar", "db1", "db2"], default="db1", help="wavelet family (default: %(default)s)")
    p.add_argument("--levels", default="auto", help="decomposition levels, or 'auto' (default: %(default)s)")
    p.add_argument("--rule", choices=["none", "hard", "soft"], default="soft", help="shrinkage kind (default: %(default)s)")
    p.add_argument(
        "--selector", choices=["bayes", "visu", "sure", "fixed"], default="bayes", help="threshold selector (default: %(default)s)"
    )
    p.add_argument("--sigma", type=float, default=0.04, help="noise scale (default: %(default)s)")
    p.add_argument("--fixed-threshold", dest="fixed_threshold", type=float, default=0.0, help="threshold for selector=fixed")
    _add_seed(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("defend", help="full defense: deflection, then wavelet denoising")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--config", default=None, help="key=value config file; flags override it")
    p.add_argument("--map", default=None, help="f32grid activation map for targeted deflection")
    _add_overrides(p)
    _add_seed(p)
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("evaluate", help="attack a dataset and measure the defense")
    p.add_argument("--manifest", required=True, help="CSV of (path, label)")
    p.add_argument("--classifier", required=True, help="classifier weights written by train-toy")
    p.add_argument("--report", required=True, help="report base path; writes .csv/.json/_records.csv")
    p.add_argument("--config", default=None)
    _add_attack_flags(p)
    _add_overrides(p)
    _add_seed(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel workers across images (default: %(default)s)")
    p.add_argument("--timing", action="store_true", help="record wall-clock runtime_ms in the report (off by default so reports are byte-reproducible)")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figure next to the report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid", help="sweep sigma/window/deflections and report each point")
    p.add_argument("--manifest", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--sigmas", default="0.02,0.04,0.06", help="comma-separated sigma grid (default: %(default)s)")
    p.add_argument("--windows", default="5,10,50", help="comma-separated window grid (default: %(default)s)")
    p.add_argument(
        "--deflections",
        dest="deflections_grid",
        default="10,100,1000",
        help="comma-separated deflection-count grid (default: %(default)s)",
    )
    _add_attack_flags(p)
    p.add_argument("--targeted", type=lambda s: _parse_bool(s, "--targeted"), default=None, metavar="{true,false}")
    p.add_argument("--k-top", dest="k_top", type=int, default=None)
    p.add_argument("--wavelet", choices=["haar", "db1", "db2"], default=None)
    p.add_argument("--levels", default=None)
    p.add_argument("--rule", choices=["none", "hard", "soft"], default=None)
    p.add_argument("--selector", choices=["bayes", "visu", "sure", "fixed"], default=None)
    p.add_argument("--fixed-threshold", dest="fixed_threshold", type=float, default=None)
    p.add_argument("--ensemble", type=int, default=None)
    _add_seed(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_grid, window=None, deflections=None, sigma=None)

    p = sub.add_parser("train-toy", help="train the linear-softmax toy classifier")
    p.add_argument("--manifest", default=None, help="training dataset manifest")
    p.add_argument("--synthetic", action="store_true", help="train on a generated synthetic dataset")
    p.add_argument("--classes", type=int, default=8, help="synthetic class count (default: %(default)s)")
    p.add_argument("--count", type=int, default=800, help="synthetic image count (default: %(default)s)")
    p.add_argument("--size", type=int, default=32, help="synthetic image size (default: %(default)s)")
    p.add_argument("--noise", type=float, default=DEFAULT_NOISE, help="synthetic pixel noise (default: %(default)s)")
    p.add_argument("--epochs", type=int, default=300, help="training epochs (default: %(default)s)")
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=0.5, help="(default: %(default)s)")
    p.add_argument("--output", required=True, help="where to write classifier weights")
    _add_seed(p)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("gen-synthetic", help="write a synthetic dataset and manifest")
    p.add_argument("--outdir", required=True)
    p.add_argument("--classes", type=int, default=8, help="(default: %(default)s)")
    p.add_argument("--count", type=int, default=200, help="(default: %(default)s)")
    p.add_argument("--size", type=int, default=32, help="(default: %(default)s)")
    p.add_argument("--noise", type=float, default=DEFAULT_NOISE, help="(default: %(default)s)")
    p.add_argument("--jitter", type=float, default=DEFAULT_JITTER, help="(default: %(default)s)")
    p.add_argument("--format", choices=["png", "f32"], default="png", help="(default: %(default)s)")
    _add_seed(p)
    p.set_defaults(func=cmd_gen_synthetic)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # surface a clean message, not a traceback
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 1
