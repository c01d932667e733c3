"""Command-line front end: ``nlmimo {bussgang,design,simulate,sweep}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .bussgang import chain_params
from .config import ChainConfig, ConfigError, RunConfig, load_config
from .framework import (estimate_eta_ideal, required_gamma, scenario_alpha, search_hw_spec,
                        snr_edge_bound)
from .scenario import ScenarioSpec
from .simulation import ber_monte_carlo, find_snr_edge
from .utils import db2lin, lin2db

log = logging.getLogger("nlmimo")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

BUSSGANG_COLUMNS = ["config_hash", "seed", "stage", "a", "sigma_g2", "gamma_g_db",
                    "a_stderr", "sigma_g2_stderr", "gamma_g_db_stderr", "n_samples"]
DESIGN_COLUMNS = ["beta", "pc", "b", "p1db_bb_db", "p1db_pb_db", "gamma_g_db",
                  "snr_edge_bound_db", "gamma_target_db", "eta_db", "alpha_p_db",
                  "status", "config_hash", "seed"]
SIMULATE_COLUMNS = ["config_hash", "seed", "cell", "kind", "beta", "pc", "chain",
                    "gamma_g_db", "snr_edge_db", "quantile_ber", "sinr_p5_db",
                    "sinr_median_db", "n_drops", "n_symbols", "reachable",
                    "snr_edge_bound_db", "status"]


# ----------------------------------------------------------------------------
# Formatting


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".10g")
    if isinstance(v, complex):
        return format(v, ".10g")
    return "" if v is None else str(v)


def render(rows, columns, fmt: str) -> str:
    if fmt == "json":
        return json.dumps([{c: _fmt(r.get(c)) for c in columns} for r in rows], indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _emit(text: str, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------------------
# Commands


def cmd_bussgang(cfg: RunConfig, seed: int):
    """One row per stage (alone, in its slot) plus the whole cascade.

    Analog stages are reported without the AGC, so ``a`` and ``sigma_g2`` are
    the stage's own normalized values; a quantizer always sits behind it.
    """
    n = cfg.bussgang.n_samples
    rows = []
    entries = []
    for s in cfg.chain.stages:
        chain = ChainConfig((s,)).build()
        if s.kind != "quantizer":
            chain = dataclasses.replace(chain, agc=False)
        entries.append((f"{s.kind}:{ChainConfig((s,)).label}", chain))
    entries.append(("cascade", cfg.chain.build()))
    for name, chain in entries:
        p = chain_params(chain, n, seed)
        rows.append({"config_hash": cfg.hash, "seed": seed, "stage": name,
                     "a": float(np.real(p.a)), "sigma_g2": p.sigma_g2, "gamma_g_db": p.gamma_g_db,
                     "a_stderr": p.a_stderr, "sigma_g2_stderr": p.sigma_g2_stderr,
                     "gamma_g_db_stderr": p.gamma_g_db_stderr, "n_samples": p.n_samples})
    return rows, BUSSGANG_COLUMNS


def _eta(scenario: ScenarioSpec, section, seed, workers, fixed_db=None) -> float:
    if fixed_db is not None:
        return db2lin(fixed_db)
    if section.eta_db is not None:
        return db2lin(section.eta_db)
    est = estimate_eta_ideal(scenario, seed, section.method, section.n_drops, workers=workers)
    log.info("eta_ideal %.2f dB (gap %.2f dB, %s)", est.eta_db, est.gap_db, est.method)
    return est.eta


def cmd_design(cfg: RunConfig, seed: int, workers: int = 1):
    """Map each (beta, power control) row to the cheapest hardware spec and its SNR_edge bound."""
    d = cfg.design
    if not d.rows:
        raise ConfigError("design: no rows given")
    rows = []
    failed = False
    for row in d.rows:
        sc = dataclasses.replace(cfg.scenario, n_users=row.n_users, power_control=row.power_control)
        out = {"beta": sc.beta, "pc": row.power_control, "config_hash": cfg.hash, "seed": seed}
        try:
            eta = _eta(sc, d.eta, seed, workers, row.eta_db)
            target = sc.sinr_target
            if row.gamma_g_db is not None:
                g_target = row.gamma_g_db
                alpha = scenario_alpha(sc, db2lin(g_target), seed=seed)
            else:
                sc = sc.with_snr(row.snr_edge_db)
                alpha = scenario_alpha(sc, seed=seed)
                g_target = lin2db(required_gamma(db2lin(row.snr_edge_db), target, eta, sc.beta, alpha))
            pts = search_hw_spec(g_target, d.bits, d.p1db_pb.values(), d.p1db_bb.values(),
                                 d.n_samples, seed)
            best = pts[0]
            bound = snr_edge_bound(db2lin(best.gamma_g_db), target, eta, sc.beta, alpha)
            out.update(b=best.bits, p1db_bb_db=best.p1db_bb_db, p1db_pb_db=best.p1db_pb_db,
                       gamma_g_db=best.gamma_g_db, snr_edge_bound_db=lin2db(bound),
                       gamma_target_db=g_target, eta_db=lin2db(eta), alpha_p_db=lin2db(alpha),
                       status="ok")
        except ValueError as exc:
            failed = True
            out["status"] = f"infeasible: {exc}"
        rows.append(out)
    if failed:
        log.warning("some design rows are infeasible")
    return rows, DESIGN_COLUMNS


def _report_row(rep, base: dict, kind: str):
    s = np.sort(rep.per_user_sinr)
    return {**base, "kind": kind, "snr_edge_db": rep.snr_edge_db, "quantile_ber": rep.quantile_ber,
            "sinr_p5_db": lin2db(np.quantile(s, 1 - rep.availability)),
            "sinr_median_db": lin2db(np.median(s)), "n_drops": rep.n_drops,
            "n_symbols": rep.n_symbols, "status": "ok"}


def simulate_cell(scenario: ScenarioSpec, chain_cfg: ChainConfig, sim, seed: int, workers: int,
                  config_hash: str, cell: str = ""):
    chain = chain_cfg.build()
    params = chain_params(chain)
    base = {"config_hash": config_hash, "seed": seed, "cell": cell, "beta": scenario.beta,
            "pc": scenario.power_control, "chain": chain_cfg.label, "gamma_g_db": params.gamma_g_db}
    bound_db = math.nan
    if sim.search:
        eta = _eta(scenario, sim.eta, seed, workers)
        alpha = scenario_alpha(scenario, params.gamma_g, seed=seed)
        bound_db = lin2db(snr_edge_bound(params.gamma_g, scenario.sinr_target, eta, scenario.beta, alpha))
    base["snr_edge_bound_db"] = bound_db
    rows = []
    for snr in sim.snr_edge_db:
        rep = ber_monte_carlo(scenario.with_snr(snr), chain, sim.n_symbols, sim.n_drops, seed, workers)
        rows.append(_report_row(rep, base, "eval"))
    if sim.search:
        res = find_snr_edge(scenario, chain, sim.n_symbols, sim.n_drops, seed, workers,
                            sim.snr_lo_db, sim.snr_hi_db, sim.tol_db)
        for snr, ber in res.evaluations:
            rows.append({**base, "kind": "bisect", "snr_edge_db": snr, "quantile_ber": ber,
                         "n_drops": sim.n_drops, "n_symbols": sim.n_symbols, "status": "ok"})
        rows.append({**base, "kind": "snr_edge_sim", "snr_edge_db": res.snr_edge_db,
                     "reachable": res.reachable, "n_drops": sim.n_drops,
                     "n_symbols": sim.n_symbols,
                     "status": "ok" if res.reachable else "target BER unreachable on SNR range"})
    return rows


def cmd_simulate(cfg: RunConfig, seed: int, workers: int = 1):
    return simulate_cell(cfg.scenario, cfg.chain, cfg.simulate, seed, workers, cfg.hash), SIMULATE_COLUMNS


def sweep_cells(cfg: RunConfig):
    sw = cfg.sweep
    ks = sw.n_users or (cfg.scenario.n_users,)
    pcs = sw.power_control or (cfg.scenario.power_control,)
    chains = sw.chains or (cfg.chain,)
    cells = []
    for k in ks:
        for pc in pcs:
            for ci, ch in enumerate(chains):
                cells.append((f"K{k}-{pc}-c{ci}-{ch.label}", k, pc, ch))
    return cells


def cmd_sweep(cfg: RunConfig, seed: int, workers: int = 1, out=None):
    """Run every (K, power control, chain) cell; finished cells are kept under ``<out>.cells/``."""
    cell_dir = Path(str(out) + ".cells") if out else None
    if cell_dir:
        cell_dir.mkdir(parents=True, exist_ok=True)
    rows, failed = [], False
    for name, k, pc, ch in sweep_cells(cfg):
        marker = cell_dir / f"{name}.{cfg.hash}.{seed}.json" if cell_dir else None
        if marker is not None and marker.exists():
            rows.extend(json.loads(marker.read_text(encoding="utf-8")))
            continue
        try:
            sc = dataclasses.replace(cfg.scenario, n_users=k, power_control=pc)
            cell_rows = simulate_cell(sc, ch, cfg.simulate, seed, workers, cfg.hash, name)
        except Exception as exc:  # recorded per cell; the sweep goes on
            log.error("cell %s failed: %s", name, exc)
            failed = True
            rows.append({"config_hash": cfg.hash, "seed": seed, "cell": name,
                         "beta": k / cfg.scenario.n_antennas, "pc": pc, "chain": ch.label,
                         "status": f"error: {exc}"})
            continue
        cell_rows = [{k: _fmt(v) for k, v in r.items()} for r in cell_rows]
        if marker is not None:
            tmp = marker.with_suffix(".tmp")
            tmp.write_text(json.dumps(cell_rows), encoding="utf-8")
            tmp.replace(marker)
        rows.extend(cell_rows)
    return rows, SIMULATE_COLUMNS, failed


# ----------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML or JSON run config")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--workers", type=int, default=1, help="worker processes over drops")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="nlmimo", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("bussgang", parents=[common], help="Bussgang parameters of each stage and the cascade")
    sub.add_parser("design", parents=[common], help="hardware specs and SNR_edge bounds per scenario row")
    sub.add_parser("simulate", parents=[common], help="BER Monte Carlo and SNR_edge bisection")
    sub.add_parser("sweep", parents=[common], help="simulate over a K x power-control x chain grid")
    return ap


def _seed(cfg: RunConfig, command: str, default: int = 0) -> int:
    if cfg.seed is not None:
        return cfg.seed
    if command in ("simulate", "sweep"):
        raise ConfigError(f"{command} needs a seed (config 'seed' or --seed)")
    return default


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg = load_config(args.config).with_seed(args.seed)
        seed = _seed(cfg, args.command)
        if args.command == "bussgang":
            cfg.chain.build()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        failed = False
        if args.command == "bussgang":
            rows, cols = cmd_bussgang(cfg, seed)
        elif args.command == "design":
            rows, cols = cmd_design(cfg, seed, args.workers)
        elif args.command == "simulate":
            rows, cols = cmd_simulate(cfg, seed, args.workers)
        else:
            rows, cols, failed = cmd_sweep(cfg, seed, args.workers, args.out)
        _emit(render(rows, cols, args.format), args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_RUNTIME if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
