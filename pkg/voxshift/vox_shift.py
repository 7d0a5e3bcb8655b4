from __future__ import annotations

from argparse import SUPPRESS, ArgumentParser, Namespace
from configparser import ConfigParser, Error as ConfigParserError
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable
import logging
import os
import sys

import numpy as np
import pandas as pd

from voxshift.backend.classification import BlockClassification, classify_world, load_classification
from voxshift.backend.isovist import (DEFAULT_STEP_BUDGET, DEFAULT_VIEW_DISTANCE, Headspace, compute_isovists,
                                      enumerate_headspaces, subsample_headspaces, write_set_dump)
from voxshift.backend.metrics import IsovistMetrics, MetricsTable, compute_metrics
from voxshift.backend.pca import PCAModel, fit_pca, load_model, project_rows, save_model, write_loadings
from voxshift.backend.shift import (DEFAULT_MATCH_RADIUS, DEFAULT_PAIR_FRACTION, DEFAULT_TOP_K, compute_shift,
                                    format_summary, format_top_k, pair_locations, sample_base, shift_summary,
                                    top_k_shifts, write_shift_csv, write_summary)
from voxshift.backend.toy_generator import (DEFAULT_FOOTPRINT, DEFAULT_MATERIAL, DEFAULT_STRUCTURES,
                                            DEFAULT_WALL_HEIGHT, ToyGeneratorParams, apply_toy_generator,
                                            plan_structures)
from voxshift.backend.world import Coord, VoxelWorld, generate_flat_world, read_world, write_world
from voxshift.errors import ConfigError, PairingError, VoxShiftError
from voxshift.renders.overlay import COLUMN_AGGREGATES, ground_threshold, render_overlay, write_ppm
from voxshift.renders.pc_plots import render_era_scatter, render_flow_plot, write_svg
from voxshift.renders.plot_spec import DEFAULT_RAMP, PlotSpec, auto_range

log = logging.getLogger(__name__)

PROG = "voxshift"
WORKERS_ENV = "VOXSHIFT_WORKERS"
CONFIG_SECTION = "run"
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

# Define constants for output file names
MODEL_FILE = "model.txt"
LOADINGS_FILE = "loadings.csv"
STRUCTURES_FILE = "structures.csv"
BASE_WORLD_FILE = "base.voxg"
GEN_WORLD_FILE = "gen.voxg"


def _default_workers() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RunConfig:
    """Every setting of a run; see `load_run_config` for where values come from."""
    base: Path | None = None
    gen: tuple[Path, ...] = ()
    metrics: tuple[Path, ...] = ()
    classify: Path | None = None
    model: Path | None = None
    d: float = DEFAULT_VIEW_DISTANCE
    n: int = DEFAULT_STEP_BUDGET
    iso_fraction: float = 0.1
    pair_fraction: float = DEFAULT_PAIR_FRACTION
    match_radius: float = DEFAULT_MATCH_RADIUS
    seed: int = 0
    top_k: int = DEFAULT_TOP_K
    components: int = 2
    workers: int = field(default_factory=_default_workers)
    out: Path = Path("voxshift-out")
    column_agg: str = "mean"
    ramp: str = DEFAULT_RAMP
    ground_threshold: int | None = None
    dump_sets: bool = False
    dims: tuple[int, int, int] = (64, 32, 64)
    ground_height: int = 4
    ground_material: str = "grass"
    structures: int = DEFAULT_STRUCTURES
    footprint: tuple[int, int] = DEFAULT_FOOTPRINT
    wall_height: tuple[int, int] = DEFAULT_WALL_HEIGHT
    material: str = DEFAULT_MATERIAL

    def __post_init__(self) -> None:
        for name in ("iso_fraction", "pair_fraction"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {value}")
        checks = (
            (self.d >= 1, f"d must be at least 1, got {self.d}"),
            (self.n >= 0, f"n must be non-negative, got {self.n}"),
            (self.match_radius >= 0, f"match_radius must be non-negative, got {self.match_radius}"),
            (self.top_k >= 1, f"top_k must be at least 1, got {self.top_k}"),
            (self.components >= 2, f"components must be at least 2, got {self.components}"),
            (self.workers >= 1, f"workers must be at least 1, got {self.workers}"),
            (self.seed >= 0, f"seed must be non-negative, got {self.seed}"),
            (self.column_agg in COLUMN_AGGREGATES, f"column_agg must be one of {COLUMN_AGGREGATES}, got {self.column_agg!r}"),
        )
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def toy_params(self) -> ToyGeneratorParams:
        return ToyGeneratorParams(self.structures, self.footprint, self.wall_height, self.material, self.seed)


# --- Value parsing shared by the config file, the environment and the flags ---

def _ints(count: int) -> Callable[[str], tuple[int, ...]]:
    def parse(text: str) -> tuple[int, ...]:
        values = tuple(int(v) for v in text.replace(",", " ").split())
        if len(values) != count:
            raise ValueError(f"expected {count} integers, got {text!r}")
        return values
    return parse


def _paths(text: str) -> tuple[Path, ...]:
    return tuple(Path(v) for v in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
        raise ValueError(f"expected a boolean, got {text!r}")
    return lowered in ("true", "yes", "1", "on")


PARSERS: dict[str, Callable[[str], object]] = {
    "base": Path, "gen": _paths, "metrics": _paths, "classify": Path, "model": Path,
    "d": float, "n": int, "iso_fraction": float, "pair_fraction": float, "match_radius": float,
    "seed": int, "top_k": int, "components": int, "workers": int, "out": Path, "column_agg": str,
    "ground_threshold": int, "dump_sets": _bool, "dims": _ints(3), "ground_height": int,
    "ground_material": str, "structures": int, "footprint": _ints(2), "wall_height": _ints(2),
    "material": str, "ramp": str,
}


def read_config_file(path: Path) -> dict[str, object]:
    """
    Parse a `key = value` run file. Keys may use dashes or underscores.
    Raises:
        ConfigError: On unknown keys or unparsable values.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as f:
        raise FileNotFoundError(f"Config file not found at: {path}") from f
    parser = ConfigParser(delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",))
    try:
        parser.read_string(f"[{CONFIG_SECTION}]\n{text}", source=str(path))
    except ConfigParserError as e:
        raise ConfigError(f"Unreadable config file {path}: {e}") from e

    values: dict[str, object] = {}
    for key, raw in parser.items(CONFIG_SECTION):
        name = key.replace("-", "_")
        if name not in PARSERS:
            raise ConfigError(f"Unknown key {key!r} in {path}")
        try:
            values[name] = PARSERS[name](raw)
        except ValueError as e:
            raise ConfigError(f"Bad value for {key!r} in {path}: {e}") from e
    return values


def load_run_config(args: Namespace, environ: dict[str, str] | None = None) -> RunConfig:
    """Merge defaults, the --config file, VOXSHIFT_WORKERS and the given flags, in rising precedence."""
    environ = os.environ if environ is None else environ
    values: dict[str, object] = {}
    if getattr(args, "config", None) is not None:
        values.update(read_config_file(args.config))
    if WORKERS_ENV in environ:
        try:
            values["workers"] = int(environ[WORKERS_ENV])
        except ValueError as e:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {environ[WORKERS_ENV]!r}") from e
    names = {f.name for f in fields(RunConfig)}
    values.update({k: v for k, v in vars(args).items() if k in names})
    for key in ("gen", "metrics"):
        if key in values:
            values[key] = tuple(values[key])
    return RunConfig(**values)


def build_parser() -> ArgumentParser:
    # flags default to SUPPRESS so only the ones given override lower-precedence sources
    common = ArgumentParser(add_help=False, argument_default=SUPPRESS)
    common.add_argument("--config", type=Path, help="key = value run file")
    common.add_argument("--verbose", action="store_true", default=False, help="log progress to stderr")
    common.add_argument("--base", type=Path, help="base world (voxgrid)")
    common.add_argument("--gen", type=Path, action="append", help="generated world, repeatable")
    common.add_argument("--metrics", type=Path, action="append", help="metrics CSV input, repeatable")
    common.add_argument("--classify", type=Path, help="block classification file")
    common.add_argument("--model", type=Path, help="reuse a fitted PCA model")
    common.add_argument("--d", type=float, help="view distance in blocks")
    common.add_argument("--n", type=int, help="reachability step budget")
    common.add_argument("--iso-fraction", dest="iso_fraction", type=float, help="isovists sampled per Y level")
    common.add_argument("--pair-fraction", dest="pair_fraction", type=float, help="base locations paired")
    common.add_argument("--match-radius", dest="match_radius", type=float, help="pairing fallback radius")
    common.add_argument("--seed", type=int)
    common.add_argument("--top-k", dest="top_k", type=int, help="highlighted largest shifts")
    common.add_argument("--components", type=int, help="principal components kept by pca-fit")
    common.add_argument("--workers", type=int, help=f"worker processes (fallback: {WORKERS_ENV})")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--column-agg", dest="column_agg", choices=COLUMN_AGGREGATES)
    common.add_argument("--ramp", help="colour ramp: shipped name, matplotlib colormap or r g b file")
    common.add_argument("--ground-threshold", dest="ground_threshold", type=int)
    common.add_argument("--dump-sets", dest="dump_sets", action="store_true", help="write isovist set sizes")
    common.add_argument("--dims", type=PARSERS["dims"], help="toy world size 'sx,sy,sz'")
    common.add_argument("--ground-height", dest="ground_height", type=int)
    common.add_argument("--ground-material", dest="ground_material")
    common.add_argument("--structures", type=int, help="toy structure count")
    common.add_argument("--footprint", type=PARSERS["footprint"], help="toy footprint range 'min,max'")
    common.add_argument("--wall-height", dest="wall_height", type=PARSERS["wall_height"], help="'min,max'")
    common.add_argument("--material", help="toy structure material")

    parser = ArgumentParser(prog=PROG, description="Isovist metrics and generative shift of voxel worlds.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler, text in (
        ("isovists", cmd_isovists, "write a metrics CSV per world"),
        ("shift", cmd_shift, "measure generative shift between a base and generated worlds"),
        ("era", cmd_era, "PC-1/PC-2 scatter per world"),
        ("overlay", cmd_overlay, "overhead PC-1 raster of the base world"),
        ("gen-toy", cmd_gen_toy, "write a flat base world and its toy-generated counterpart"),
        ("pca-fit", cmd_pca_fit, "fit and save a PCA model"),
    ):
        sub.add_parser(name, parents=[common], help=text).set_defaults(handler=handler)
    return parser


# --- Pipeline steps ---

Records = list[tuple[Headspace, IsovistMetrics]]


def _classification(cfg: RunConfig) -> BlockClassification:
    return load_classification(cfg.classify)


def _isovist_records(world: VoxelWorld, headspaces: list[Headspace], classification: BlockClassification,
                     cfg: RunConfig) -> Records:
    sets = compute_isovists(world, headspaces, classification, cfg.d, cfg.n, cfg.workers)
    return [(s.centroid, compute_metrics(s)) for s in sets]


def _sampled(world: VoxelWorld, classification: BlockClassification, cfg: RunConfig) -> tuple[list[Headspace], list[Headspace]]:
    headspaces = enumerate_headspaces(world, classification, classify_world(world, classification))
    return headspaces, subsample_headspaces(headspaces, cfg.iso_fraction, cfg.seed)


def _require(value: object, flag: str, command: str) -> None:
    if not value:
        raise ConfigError(f"{command} needs {flag}")


def _fit_or_load(cfg: RunConfig, matrices: list[np.ndarray]) -> PCAModel:
    if cfg.model is not None:
        model = load_model(cfg.model)
        if model.k < 2:
            raise ConfigError(f"Model {cfg.model} holds {model.k} component, 2 are needed")
        return model
    return fit_pca(np.vstack(matrices), cfg.components)


def _era_spec(points: list[np.ndarray], title: str, cfg: RunConfig) -> PlotSpec:
    """Shared ranges so the scatters of one run are comparable."""
    stacked = np.vstack(points)
    return PlotSpec(x_range=auto_range(stacked[:, 0]), y_range=auto_range(stacked[:, 1]),
                    highlight_k=cfg.top_k, title=title)


def _write_eras(tables: list[MetricsTable], model: PCAModel, cfg: RunConfig) -> list[np.ndarray]:
    points = [project_rows(model, t.matrix)[:, :2] for t in tables]
    for table, pts in zip(tables, points):
        write_svg(cfg.out / f"{table.name}_era.svg", render_era_scatter(pts, _era_spec(points, table.name, cfg)))
    return points


def _write_overlay(world: VoxelWorld, table: MetricsTable, points: np.ndarray, threshold: int, cfg: RunConfig,
                   highlights: Iterable[Coord] = ()) -> None:
    image = render_overlay(world, list(zip(table.headspaces, points)), threshold, PlotSpec(ramp=cfg.ramp),
                           cfg.column_agg, highlights)
    write_ppm(cfg.out / f"{table.name}_pc1.ppm", image)


def cmd_isovists(cfg: RunConfig) -> None:
    """Enumerate, sub-sample and measure every given world; one metrics CSV each."""
    worlds = ([cfg.base] if cfg.base else []) + list(cfg.gen)
    _require(worlds, "--base or --gen", "isovists")
    classification = _classification(cfg)
    for path in worlds:
        world = read_world(path)
        headspaces, sample = _sampled(world, classification, cfg)
        print(f"{path.stem}: {len(headspaces)} headspaces, {len(sample)} sampled")
        sets = compute_isovists(world, sample, classification, cfg.d, cfg.n, cfg.workers)
        if not sets:
            log.warning("%s has no headspaces, no CSV written", path)
            continue
        records = [(s.centroid, compute_metrics(s)) for s in sets]
        MetricsTable.from_records(records, path.stem).save_csv(cfg.out / f"{path.stem}_metrics.csv")
        if cfg.dump_sets:
            write_set_dump(cfg.out / f"{path.stem}_sets.tsv", sets)


def cmd_shift(cfg: RunConfig) -> None:
    """
    Measure every generated world against the base: joint PCA, pairing, shift CSV, summary,
    flow plot, ERA scatters and PC-1 overlays.
    """
    _require(cfg.base, "--base", "shift")
    _require(cfg.gen, "--gen", "shift")
    classification = _classification(cfg)

    base_world = read_world(cfg.base)
    _, base_sample = _sampled(base_world, classification, cfg)
    base_records = _isovist_records(base_world, base_sample, classification, cfg)
    if not base_records:
        raise PairingError(f"Base world {cfg.base} has no headspaces")
    base_table = MetricsTable.from_records(base_records, f"base_{cfg.base.stem}")
    columns = {(hs.head[0], hs.head[2]) for hs, _ in sample_base(base_records, cfg.pair_fraction, cfg.seed)}

    gen_worlds, gen_tables = [], []
    for j, path in enumerate(cfg.gen):
        world = read_world(path)
        headspaces, sample = _sampled(world, classification, cfg)
        # the column matching rule needs the generated headspaces above every sampled base column
        paired_columns = [hs for hs in headspaces if (hs.head[0], hs.head[2]) in columns]
        gathered = sorted(set(sample) | set(paired_columns), key=lambda h: h.sort_key)
        records = _isovist_records(world, gathered, classification, cfg)
        if not records:
            raise PairingError(f"Generated world {path} has no headspaces")
        gen_worlds.append(world)
        gen_tables.append(MetricsTable.from_records(records, f"gen{j}_{path.stem}"))

    tables = [base_table, *gen_tables]
    for table in tables:
        table.save_csv(cfg.out / f"{table.name}_metrics.csv")
    model = _fit_or_load(cfg, [t.matrix for t in tables])
    save_model(cfg.out / MODEL_FILE, model)
    write_loadings(cfg.out / LOADINGS_FILE, model)

    highlights: list[list[Coord]] = [[]]
    for table in gen_tables:
        pairing = pair_locations(base_table.records(), table.records(), cfg.pair_fraction,
                                 cfg.match_radius, cfg.seed)
        if not pairing.pairs:
            raise PairingError(f"No location of {table.name} paired with the base world "
                               f"({pairing.sampled} sampled, match radius {cfg.match_radius})")
        records = compute_shift(pairing.pairs, model)
        summary = shift_summary(records, pairing.dropped)
        write_shift_csv(cfg.out / f"{table.name}_shift.csv", records)
        write_summary(cfg.out / f"{table.name}_summary.txt", summary)
        spec = PlotSpec(highlight_k=cfg.top_k, title=f"{base_table.name} -> {table.name}")
        write_svg(cfg.out / f"{table.name}_flow.svg", render_flow_plot(records, spec))
        print(f"== {table.name}")
        print(format_summary(summary))
        top = top_k_shifts(records, cfg.top_k)
        print(format_top_k(top))
        highlights[0].extend(r.pair.base.head for r in top)
        highlights.append([r.pair.gen.head for r in top])

    points = _write_eras(tables, model, cfg)
    threshold = cfg.ground_threshold if cfg.ground_threshold is not None else \
        ground_threshold(enumerate_headspaces(base_world, classification))
    # the base overlay marks the most shifted base locations of every generated world
    for world, table, pts, marks in zip([base_world, *gen_worlds], tables, points, highlights):
        _write_overlay(world, table, pts, threshold, cfg, marks)


def _metric_tables(cfg: RunConfig, command: str) -> list[MetricsTable]:
    _require(cfg.metrics, "--metrics", command)
    return [MetricsTable.from_csv(path) for path in cfg.metrics]


def cmd_era(cfg: RunConfig) -> None:
    """PC scatter per metrics CSV, under a given model or one fitted on all of them."""
    tables = _metric_tables(cfg, "era")
    _write_eras(tables, _fit_or_load(cfg, [t.matrix for t in tables]), cfg)


def cmd_overlay(cfg: RunConfig) -> None:
    """PC-1 raster of the base world from its metrics CSV."""
    _require(cfg.base, "--base", "overlay")
    tables = _metric_tables(cfg, "overlay")
    world = read_world(cfg.base)
    model = _fit_or_load(cfg, [t.matrix for t in tables])
    threshold = cfg.ground_threshold if cfg.ground_threshold is not None else \
        ground_threshold(enumerate_headspaces(world, _classification(cfg)))
    table = tables[0]
    _write_overlay(world, table, project_rows(model, table.matrix)[:, :2], threshold, cfg)


def cmd_gen_toy(cfg: RunConfig) -> None:
    """Flat base world, its toy-generated counterpart and the planned footprints."""
    base = generate_flat_world(cfg.dims, cfg.ground_height, cfg.ground_material, cfg.seed)
    params = cfg.toy_params()
    write_world(cfg.out / BASE_WORLD_FILE, base)
    write_world(cfg.out / GEN_WORLD_FILE, apply_toy_generator(base, params))
    structures = plan_structures(base, params) if params.structure_count else []
    pd.DataFrame([vars(s) for s in structures],
                 columns=["x0", "z0", "width", "depth", "height", "base_y"]).to_csv(
        cfg.out / STRUCTURES_FILE, index=False, lineterminator="\n")
    print(f"Wrote {BASE_WORLD_FILE} and {GEN_WORLD_FILE} with {len(structures)} structures to {cfg.out}")


def cmd_pca_fit(cfg: RunConfig) -> None:
    """Fit on the concatenated metrics CSVs and save the model."""
    tables = _metric_tables(cfg, "pca-fit")
    model = fit_pca(np.vstack([t.matrix for t in tables]), cfg.components)
    save_model(cfg.out / MODEL_FILE, model)
    write_loadings(cfg.out / LOADINGS_FILE, model)
    ratios = " ".join(f"{r:.4f}" for r in model.explained_variance_ratio)
    print(f"Fitted {model.k} components on {sum(len(t) for t in tables)} rows; explained variance {ratios}")


def run_vox_shift(argv: list[str] | None = None) -> int:
    """
    Run one voxshift subcommand.
    Returns:
        int: 0 on success, 2 on a reported failure
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format=LOG_FORMAT,
                        stream=sys.stderr)
    try:
        cfg = load_run_config(args)
        cfg.out.mkdir(parents=True, exist_ok=True)
        args.handler(cfg)
    except (VoxShiftError, OSError, ValueError) as e:
        print(f"{PROG}: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(run_vox_shift())
