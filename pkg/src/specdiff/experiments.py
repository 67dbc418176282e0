"""Experiment drivers: configuration documents, seven experiment kinds,
metric tables, and atomic report emission.

A configuration is one JSON document. Reruns with an identical (document,
seed) pair produce byte-identical metric tables; wall-clock runtime is the
only report field allowed to vary.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import (
    Categorical,
    SeededRng,
    Vocabulary,
    sequence_code,
    sequence_from_code,
    word_from_tokens,
)
from .decoding import (
    DecodeConfig,
    PredictorPair,
    SpecTrace,
    StaticPredictor,
    decode_independent,
    decode_sequential,
    decode_speculative,
    full_inference,
)
from .errors import InvariantError, SchemaError
from .forward import (
    KernelSchedule,
    build_absorbing_schedule,
    build_uniform_schedule,
    constant_betas,
    sample_forward,
)
from .oracle import (
    DataLaw,
    ExactPredictor,
    clean_posterior_joint,
    factorized_joint,
    prefix_identity_gap,
    prefix_posterior,
    recorruption_conditional,
)
from .stats import (
    CostModel,
    cost_accounting,
    empirical_joint,
    expected_committed_length,
    ideal_speedup,
    measure_acceptance,
    simulate_committed_length,
    tv_distance,
)
from .training import (
    TrainConfig,
    exact_conditional_entropy,
    loss_eval,
    train_position_conditioned,
)

__all__ = [
    "KINDS",
    "ExperimentConfig",
    "ExperimentReport",
    "MetricRow",
    "SUITES",
    "Table",
    "build_decode",
    "build_law",
    "build_schedule",
    "emit_report",
    "parse_config",
    "parse_config_file",
    "run_experiment",
    "run_suite",
    "serialize_config",
]

KINDS = (
    "exactness",
    "prefix-identity",
    "committed-length",
    "speedup",
    "factorization-gap",
    "train-consistency",
    "full-inference",
)

_TOP_KEYS = {"kind", "seed", "n_replications", "out", "figures",
             "law", "schedule", "decode", "train", "params"}

_LAW_KEYS = {
    "uniform": {"name", "vocab_size", "dim"},
    "product": {"name", "vocab_size", "marginals"},
    "markov": {"name", "vocab_size", "dim", "initial", "transition"},
    "table": {"name", "vocab_size", "dim", "table"},
    "random": {"name", "vocab_size", "dim", "seed", "concentration"},
}

_SCHEDULE_KEYS = {"kind", "steps", "betas", "terminal_mask_rate"}

_DECODE_KEYS = {"window", "n_steps", "remask_budget", "recorrupt_t", "mode",
                "prompt_len", "unresolved"}

_TRAIN_KEYS = {"n_samples", "smoothing", "seed", "t_probs"}

_PARAM_KEYS = {
    "exactness": {"n_samples", "tol", "start_tokens"},
    "prefix-identity": {"n_trials", "max_vocab", "max_dim", "tol"},
    "committed-length": {"alphas", "ks", "n_rounds"},
    "speedup": {"vocab_size", "c_draft", "c_verify",
                "alpha1_dim", "alpha1_window", "alpha1_decodes", "alpha1_tol",
                "pair_count", "pair_dim", "pair_window", "pair_decodes", "pair_tol",
                "mass_pairs", "mass_rounds", "mass_tol", "mass_vocab"},
    "factorization-gap": {"n_samples", "target_word", "indep_target", "indep_tol",
                          "spec_tol", "analytic_tv", "analytic_tol"},
    "train-consistency": {"context_tol", "plugin_samples", "plugin_tol",
                          "plugin_smoothing", "loss_eval_samples", "loss_tol"},
    "full-inference": {"n_runs", "min_visits", "tol"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int = 0
    n_replications: int = 1
    out: str | None = None
    figures: bool = True
    law: Mapping = field(default_factory=lambda: {"name": "uniform", "vocab_size": 2, "dim": 2})
    schedule: Mapping = field(default_factory=lambda: {"kind": "absorbing", "steps": 1})
    decode: Mapping = field(default_factory=dict)
    train: Mapping | None = None
    params: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class MetricRow:
    """One asserted or diagnostic quantity. `passed` is None for diagnostics."""

    name: str
    value: float
    tolerance: float | None = None
    passed: bool | None = None
    note: str = ""


@dataclass(frozen=True)
class Table:
    """One delimited metric family."""

    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    metrics: list[MetricRow]
    tables: list[Table]
    summary: dict
    runtime_seconds: float | None = None

    @property
    def failed(self) -> list[MetricRow]:
        return [m for m in self.metrics if m.passed is False]

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0


# ---- configuration ----------------------------------------------------------


def _expect_mapping(value, path: str) -> dict:
    if not isinstance(value, Mapping):
        raise SchemaError(f"{path}: expected an object, got {type(value).__name__}")
    return dict(value)


def _expect_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{path}: expected an integer, got {value!r}")
    return value


def parse_config(doc: Mapping) -> ExperimentConfig:
    """Validate a configuration document; structural problems raise
    SchemaError, value problems raise InvariantError, both with field paths."""
    data = _expect_mapping(doc, "<document>")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise SchemaError(f"unexpected top-level keys: {sorted(unknown)}")
    if "kind" not in data:
        raise SchemaError("kind: required")
    kind = data["kind"]
    if kind not in KINDS:
        raise SchemaError(f"kind: {kind!r} is not one of {list(KINDS)}")

    seed = _expect_int(data.get("seed", 0), "seed")
    reps = _expect_int(data.get("n_replications", 1), "n_replications")
    if reps < 1:
        raise InvariantError("n_replications: must be >= 1")
    out = data.get("out")
    if out is not None and not isinstance(out, str):
        raise SchemaError("out: expected a string path")
    figures = data.get("figures", True)
    if not isinstance(figures, bool):
        raise SchemaError("figures: expected a boolean")

    law = _expect_mapping(data.get("law", {"name": "uniform", "vocab_size": 2, "dim": 2}), "law")
    schedule = _expect_mapping(data.get("schedule", {"kind": "absorbing", "steps": 1}), "schedule")
    decode = _expect_mapping(data.get("decode", {}), "decode")
    train = data.get("train")
    if train is not None:
        train = _expect_mapping(train, "train")
        bad = set(train) - _TRAIN_KEYS
        if bad:
            raise SchemaError(f"train: unexpected keys {sorted(bad)}")
    params = _expect_mapping(data.get("params", {}), "params")
    bad = set(params) - _PARAM_KEYS[kind]
    if bad:
        raise InvariantError(f"params: keys {sorted(bad)} are not used by kind {kind!r}")

    cfg = ExperimentConfig(kind=kind, seed=seed, n_replications=reps, out=out,
                           figures=figures, law=law, schedule=schedule,
                           decode=decode, train=train, params=params)
    # Building the run objects is the value-level validation.
    law_obj = build_law(cfg.law)
    build_schedule(cfg.schedule, law_obj.vocab)
    build_decode(cfg.decode)
    if train is not None:
        _build_train(train)
    return cfg


def parse_config_file(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise SchemaError(f"cannot read config {path}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"config {path} is not valid JSON: {e}") from e
    return parse_config(doc)


def serialize_config(cfg: ExperimentConfig) -> dict:
    """Canonical echo of a configuration with defaults materialized."""
    return {
        "kind": cfg.kind,
        "seed": cfg.seed,
        "n_replications": cfg.n_replications,
        "out": cfg.out,
        "figures": cfg.figures,
        "law": dict(cfg.law),
        "schedule": dict(cfg.schedule),
        "decode": dict(cfg.decode),
        "train": dict(cfg.train) if cfg.train is not None else None,
        "params": dict(cfg.params),
    }


def build_law(spec: Mapping) -> DataLaw:
    spec = _expect_mapping(spec, "law")
    name = spec.get("name", "uniform")
    if name not in _LAW_KEYS:
        raise InvariantError(f"law.name: unknown constructor {name!r}")
    bad = set(spec) - _LAW_KEYS[name]
    if bad:
        raise InvariantError(f"law: unexpected keys {sorted(bad)} for {name!r}")
    try:
        vocab = Vocabulary(int(spec.get("vocab_size", 2)))
        if name == "uniform":
            return DataLaw.uniform(vocab, int(spec.get("dim", 2)))
        if name == "product":
            return DataLaw.product(vocab, spec["marginals"])
        if name == "markov":
            return DataLaw.markov(vocab, int(spec["dim"]), spec["initial"], spec["transition"])
        if name == "table":
            return DataLaw.from_probs(vocab, int(spec["dim"]), spec["table"])
        return DataLaw.random(vocab, int(spec["dim"]), int(spec.get("seed", 0)),
                              float(spec.get("concentration", 1.0)))
    except KeyError as e:
        raise InvariantError(f"law.{e.args[0]}: required for {name!r}") from e
    except ValueError as e:
        raise InvariantError(f"law: {e}") from e


def build_schedule(spec: Mapping, vocab: Vocabulary) -> KernelSchedule:
    spec = _expect_mapping(spec, "schedule")
    bad = set(spec) - _SCHEDULE_KEYS
    if bad:
        raise InvariantError(f"schedule: unexpected keys {sorted(bad)}")
    kind = spec.get("kind", "absorbing")
    if kind not in ("absorbing", "uniform"):
        raise InvariantError(f"schedule.kind: unknown kind {kind!r}")
    try:
        if "betas" in spec:
            if "terminal_mask_rate" in spec:
                raise InvariantError("schedule: give either betas or terminal_mask_rate")
            betas = tuple(float(b) for b in spec["betas"])
            if "steps" in spec and int(spec["steps"]) != len(betas):
                raise InvariantError("schedule.steps: inconsistent with betas length")
        else:
            steps = int(spec.get("steps", 1))
            betas = constant_betas(steps, float(spec.get("terminal_mask_rate", 1.0)))
        builder = build_absorbing_schedule if kind == "absorbing" else build_uniform_schedule
        return builder(vocab, betas)
    except InvariantError:
        raise
    except ValueError as e:
        raise InvariantError(f"schedule: {e}") from e


def build_decode(spec: Mapping) -> DecodeConfig:
    spec = _expect_mapping(spec, "decode")
    bad = set(spec) - _DECODE_KEYS
    if bad:
        raise InvariantError(f"decode: unexpected keys {sorted(bad)}")
    try:
        return DecodeConfig(**spec)
    except (TypeError, ValueError) as e:
        raise InvariantError(f"decode: {e}") from e


def _build_train(spec: Mapping) -> TrainConfig:
    try:
        t_probs = spec.get("t_probs")
        return TrainConfig(n_samples=int(spec["n_samples"]),
                           smoothing=float(spec.get("smoothing", 0.5)),
                           seed=int(spec.get("seed", 0)),
                           t_probs=tuple(float(p) for p in t_probs) if t_probs else None)
    except KeyError as e:
        raise InvariantError(f"train.{e.args[0]}: required") from e
    except ValueError as e:
        raise InvariantError(f"train: {e}") from e


# ---- runners ----------------------------------------------------------------


def _masked_start(law: DataLaw) -> tuple[int, ...]:
    return (law.vocab.mask_id,) * law.dim


def _pass_fail(value: float, tol: float) -> bool:
    return bool(value <= tol)


def _run_exactness(cfg: ExperimentConfig, law: DataLaw, sched: KernelSchedule,
                   decode: DecodeConfig):
    p = cfg.params
    n = int(p.get("n_samples", 100_000))
    tol = float(p.get("tol", 0.02))
    start = tuple(int(v) for v in p.get("start_tokens", _masked_start(law)))
    t = sched.steps
    pred = ExactPredictor(law, sched)
    pair = PredictorPair(pred, pred)
    positions = [i for i in range(law.dim) if start[i] == law.vocab.mask_id] \
        if decode.unresolved == "masked" else list(range(decode.prompt_len, law.dim))
    oracle = pred.joint(start, t, positions)

    spec_samples = []
    traces: list[SpecTrace] = []
    for rep in range(cfg.n_replications):
        rng = SeededRng(cfg.seed).derive(rep)
        for _ in range(n):
            out, tr = decode_speculative(start, t, pair, decode, rng)
            spec_samples.append(out)
            traces.append(tr)
    seq_samples = []
    for rep in range(cfg.n_replications):
        rng = SeededRng(cfg.seed).derive(7_000_003 + rep)
        for _ in range(n):
            seq_samples.append(decode_sequential(start, t, pred, rng, decode))

    spec_emp = empirical_joint(spec_samples, positions).probs(law.vocab.size)
    seq_emp = empirical_joint(seq_samples, positions).probs(law.vocab.size)
    tv_spec = tv_distance(spec_emp, oracle)
    tv_seq = tv_distance(seq_emp, oracle)
    tv_modes = tv_distance(spec_emp, seq_emp)

    metrics = [
        MetricRow("tv_speculative_vs_oracle", tv_spec, tol, _pass_fail(tv_spec, tol)),
        MetricRow("tv_sequential_vs_oracle", tv_seq, tol, _pass_fail(tv_seq, tol)),
        MetricRow("tv_speculative_vs_sequential", tv_modes, tol, _pass_fail(tv_modes, tol)),
    ]
    rows = []
    for code in range(len(oracle)):
        tokens = sequence_from_code(code, law.vocab.size, len(positions))
        rows.append((word_from_tokens(tokens), float(oracle[code]),
                     float(spec_emp[code]), float(seq_emp[code])))
    tables = [
        Table("exactness_tv", ("metric", "tv", "tolerance", "verdict"),
              tuple((m.name, m.value, m.tolerance, "pass" if m.passed else "fail")
                    for m in metrics)),
        Table("exactness_joint", ("outcome", "oracle", "speculative", "sequential"),
              tuple(rows)),
    ]
    summary = _trace_summary(traces)
    summary["n_samples"] = n * cfg.n_replications
    return metrics, tables, summary


def _run_prefix_identity(cfg: ExperimentConfig, law: DataLaw, sched: KernelSchedule,
                         decode: DecodeConfig):
    p = cfg.params
    n_trials = int(p.get("n_trials", 100)) * cfg.n_replications
    max_vocab = int(p.get("max_vocab", 3))
    max_dim = int(p.get("max_dim", 3))
    tol = float(p.get("tol", 1e-9))
    rng = SeededRng(cfg.seed)
    rows = []
    worst = 0.0
    for trial in range(n_trials):
        s = 2 + int(rng.uniform() * (max_vocab - 1))
        d = 1 + int(rng.uniform() * max_dim)
        steps = 1 + int(rng.uniform() * 3)
        kind = "absorbing" if rng.uniform() < 0.5 else "uniform"
        betas = [0.05 + 0.9 * rng.uniform() for _ in range(steps)]
        vocab = Vocabulary(s)
        builder = build_absorbing_schedule if kind == "absorbing" else build_uniform_schedule
        trial_sched = builder(vocab, betas)
        trial_law = DataLaw.random(vocab, d, seed=cfg.seed * 100_003 + trial)
        x0 = trial_law.sample(rng)
        t = 1 + int(rng.uniform() * steps)
        xt = sample_forward(x0, t, trial_sched, rng)
        i = int(rng.uniform() * d)
        gap = prefix_identity_gap(trial_law, trial_sched, xt, x0[:i], i, t)
        worst = max(worst, gap)
        rows.append((trial, kind, s, d, steps, t, i, gap))
    metrics = [MetricRow("max_identity_gap", worst, tol, _pass_fail(worst, tol)),
               MetricRow("trials", float(n_trials), None, None)]
    tables = [Table("identity_gaps",
                    ("trial", "kind", "vocab", "dim", "steps", "t", "pivot", "gap"),
                    tuple(rows))]
    return metrics, tables, {"trials": n_trials}


def _run_committed_length(cfg: ExperimentConfig, law: DataLaw, sched: KernelSchedule,
                          decode: DecodeConfig):
    p = cfg.params
    alphas = tuple(float(a) for a in p.get("alphas", (0.0, 0.25, 0.5, 0.75, 0.9, 1.0)))
    ks = tuple(int(k) for k in p.get("ks", (1, 2, 4, 8, 16)))
    n_rounds = int(p.get("n_rounds", 1_000_000)) * cfg.n_replications
    rows = []
    failures = 0
    worst = 0.0
    cell = 0
    for alpha in alphas:
        for k in ks:
            sim = simulate_committed_length(alpha, k, n_rounds, SeededRng(cfg.seed).derive(cell))
            cell += 1
            formula = expected_committed_length(alpha, k)
            err = abs(sim.mean - formula)
            ok = err <= 3.0 * sim.se
            failures += 0 if ok else 1
            worst = max(worst, err)
            rows.append((alpha, k, sim.mean, sim.se, formula, err, "pass" if ok else "fail"))
    metrics = [
        MetricRow("cells_failed", float(failures), 0.0, failures == 0,
                  note="each cell must sit within 3 standard errors"),
        MetricRow("max_abs_error", worst, None, None),
    ]
    tables = [Table("committed_length",
                    ("alpha", "k", "sim_mean", "se", "formula", "abs_error", "verdict"),
                    tuple(rows))]
    return metrics, tables, {"n_rounds": n_rounds, "cells": cell}


def _random_static_pair(vocab: Vocabulary, dim: int, rng: SeededRng,
                        identical: bool) -> tuple[PredictorPair, np.ndarray, np.ndarray]:
    pi = rng.dirichlet(np.ones(vocab.size))
    rho = pi if identical else rng.dirichlet(np.ones(vocab.size))
    target = StaticPredictor([Categorical(pi)] * dim, vocab)
    draft = target if identical else StaticPredictor([Categorical(rho)] * dim, vocab)
    return PredictorPair(target, draft), pi, rho


def _run_speedup(cfg: ExperimentConfig, law: DataLaw, sched: KernelSchedule,
                 decode: DecodeConfig):
    p = cfg.params
    vocab = Vocabulary(int(p.get("vocab_size", 4)))
    cost = CostModel(float(p.get("c_draft", 1.0)), float(p.get("c_verify", 1.0)))
    metrics: list[MetricRow] = []
    tables: list[Table] = []

    # Lockstep case: identical draft and target accept every proposal, so the
    # speedup is pinned at k * c_verify / (c_draft + c_verify).
    d1 = int(p.get("alpha1_dim", 16))
    k1 = int(p.get("alpha1_window", 16))
    n1 = int(p.get("alpha1_decodes", 64)) * cfg.n_replications
    tol1 = float(p.get("alpha1_tol", 0.01))
    pair1, _, _ = _random_static_pair(vocab, d1, SeededRng(cfg.seed).derive(11), identical=True)
    cfg1 = DecodeConfig(window=k1)
    start1 = (vocab.mask_id,) * d1
    rng1 = SeededRng(cfg.seed).derive(12)
    traces1 = []
    committed1 = 0
    for _ in range(n1):
        out, tr = decode_speculative(start1, 1, pair1, cfg1, rng1)
        traces1.append(tr)
        committed1 += d1
    measured1 = cost_accounting(traces1, cost, committed1)
    target1 = ideal_speedup(float(k1), cost)
    rel1 = abs(measured1 - target1) / target1
    metrics.append(MetricRow("alpha1_speedup", measured1, None, None,
                             note=f"target {target1}"))
    metrics.append(MetricRow("alpha1_speedup_rel_err", rel1, tol1, _pass_fail(rel1, tol1)))
    tables.append(Table("speedup_alpha1",
                        ("dim", "window", "decodes", "draft_passes", "verify_passes",
                         "measured", "target", "rel_err"),
                        ((d1, k1, n1, sum(t.draft_passes for t in traces1),
                          sum(t.verify_passes for t in traces1), measured1, target1, rel1),)))

    # Random draft/target pairs, one shared pair per position: the committed
    # length model is exact, so measured speedup must match the formula at the
    # measured acceptance rate. Windows at the sequence tail can be shorter
    # than k, which biases the comparison by O(k/dim); keep dim >> k.
    n_pairs = int(p.get("pair_count", 10))
    d2 = int(p.get("pair_dim", 128))
    k2 = int(p.get("pair_window", 4))
    n2 = int(p.get("pair_decodes", 1000)) * cfg.n_replications
    tol2 = float(p.get("pair_tol", 0.05))
    cfg2 = DecodeConfig(window=k2)
    start2 = (vocab.mask_id,) * d2
    rows2 = []
    worst2 = 0.0
    for pair_idx in range(n_pairs):
        pair, pi, rho = _random_static_pair(vocab, d2, SeededRng(cfg.seed).derive(100 + pair_idx),
                                            identical=False)
        rng = SeededRng(cfg.seed).derive(200_000 + pair_idx)
        traces = []
        committed = 0
        for _ in range(n2):
            _, tr = decode_speculative(start2, 1, pair, cfg2, rng)
            traces.append(tr)
            committed += d2
        alpha_hat = measure_acceptance(traces)
        measured = cost_accounting(traces, cost, committed)
        ideal = ideal_speedup(expected_committed_length(alpha_hat, k2), cost)
        rel = abs(measured - ideal) / ideal
        worst2 = max(worst2, rel)
        rows2.append((pair_idx, float(np.minimum(pi, rho).sum()), alpha_hat,
                      measured, ideal, rel, "pass" if rel <= tol2 else "fail"))
    metrics.append(MetricRow("max_pair_speedup_rel_err", worst2, tol2,
                             _pass_fail(worst2, tol2)))
    tables.append(Table("speedup_random",
                        ("pair", "overlap_mass", "alpha_hat", "measured", "ideal",
                         "rel_err", "verdict"),
                        tuple(rows2)))

    # Acceptance-rate calibration on single-position rounds: the measured rate
    # converges to the overlap mass sum(min(pi, rho)).
    n_mass = int(p.get("mass_pairs", 20))
    rounds = int(p.get("mass_rounds", 20_000)) * cfg.n_replications
    tol3 = float(p.get("mass_tol", 0.01))
    mass_vocab = Vocabulary(int(p.get("mass_vocab", 4)))
    cfg3 = DecodeConfig(window=1)
    start3 = (mass_vocab.mask_id,)
    rows3 = []
    worst3 = 0.0
    for pair_idx in range(n_mass):
        pair, pi, rho = _random_static_pair(mass_vocab, 1,
                                            SeededRng(cfg.seed).derive(300 + pair_idx),
                                            identical=False)
        rng = SeededRng(cfg.seed).derive(400_000 + pair_idx)
        traces = []
        for _ in range(rounds):
            _, tr = decode_speculative(start3, 1, pair, cfg3, rng)
            traces.append(tr)
        alpha_hat = measure_acceptance(traces)
        predicted = float(np.minimum(pi, rho).sum())
        err = abs(alpha_hat - predicted)
        worst3 = max(worst3, err)
        rows3.append((pair_idx, predicted, alpha_hat, err, "pass" if err <= tol3 else "fail"))
    metrics.append(MetricRow("max_acceptance_gap", worst3, tol3, _pass_fail(worst3, tol3)))
    tables.append(Table("acceptance_mass",
                        ("pair", "predicted_mass", "alpha_hat", "abs_err", "verdict"),
                        tuple(rows3)))

    summary = {"alpha1_decodes": n1, "pair_decodes": n2, "mass_rounds": rounds}
    return metrics, tables, summary


def _run_factorization_gap(cfg: ExperimentConfig, law: DataLaw, sched: KernelSchedule,
                           decode: DecodeConfig):
    p = cfg.params
    n = int(p.get("n_samples", 100_000)) * cfg.n_replications
    target_word = str(p.get("target_word", "aa"))
    indep_target = float(p.get("indep_target", 0.25))
    indep_tol = float(p.get("indep_tol", 0.01))
    spec_tol = float(p.get("spec_tol", 0.005))
    analytic_tv = float(p.get("analytic_tv", 0.5))
    analytic_tol = float(p.get("analytic_tol", 1e-9))

    from .core import tokens_from_word
    target_seq = tokens_from_word(target_word)
    t = sched.steps
    start = _masked_start(law)
    positions = list(range(law.dim))
    pred = ExactPredictor(law, sched)
    pair = PredictorPair(pred, pred)

    rng_i = SeededRng(cfg.seed).derive(1)
    indep_hits = 0
    indep_samples = []
    for _ in range(n):
        out = decode_independent(start, t, pred, rng_i, decode)
        indep_samples.append(out)
        if out == target_seq:
            indep_hits += 1
    rng_s = SeededRng(cfg.seed).derive(2)
    spec_hits = 0
    spec_samples = []
    for _ in range(n):
        out, _ = decode_speculative(start, t, pair, decode, rng_s)
        spec_samples.append(out)
        if out == target_seq:
            spec_hits += 1

    indep_mass = indep_hits / n
    spec_mass = spec_hits / n
    oracle = pred.joint(start, t, positions)
    meanfield = factorized_joint(law, sched, start, t, positions)
    analytic = tv_distance(meanfield, oracle)
    analytic_err = abs(analytic - analytic_tv)

    indep_err = abs(indep_mass - indep_target)
    metrics = [
        MetricRow("independent_mass_on_target", indep_mass, indep_tol,
                  _pass_fail(indep_err, indep_tol), note=f"target {indep_target}"),
        MetricRow("speculative_mass_on_target", spec_mass, spec_tol,
                  _pass_fail(spec_mass, spec_tol)),
        MetricRow("analytic_meanfield_tv_err", analytic_err, analytic_tol,
                  _pass_fail(analytic_err, analytic_tol), note=f"tv {analytic}"),
    ]
    indep_emp = empirical_joint(indep_samples, positions).probs(law.vocab.size)
    spec_emp = empirical_joint(spec_samples, positions).probs(law.vocab.size)
    rows = []
    for code in range(len(oracle)):
        tokens = sequence_from_code(code, law.vocab.size, law.dim)
        rows.append((word_from_tokens(tokens), float(oracle[code]), float(meanfield[code]),
                     float(indep_emp[code]), float(spec_emp[code])))
    tables = [Table("factorization_masses",
                    ("outcome", "oracle", "meanfield_analytic", "independent_emp",
                     "speculative_emp"),
                    tuple(rows))]
    return metrics, tables, {"n_samples": n, "target_word": target_word}


def _positive_contexts(law: DataLaw, sched: KernelSchedule) -> dict:
    """Every hybrid context with positive probability under the training
    sampler (uniform over levels), mapped to its sampling mass."""
    s, d = law.vocab.size, law.dim
    out: dict = {}
    for t in range(1, sched.steps + 1):
        qbar = sched.cum(t)
        for code in range(law.table.size):
            px0 = float(law.table[code])
            if px0 == 0.0:
                continue
            x0 = sequence_from_code(code, s, d)
            for xt_code in range((s + 1) ** d):
                xt = sequence_from_code(xt_code, s + 1, d)
                q = px0 / sched.steps
                for j in range(d):
                    q *= float(qbar[x0[j], xt[j]])
                    if q == 0.0:
                        break
                if q == 0.0:
                    continue
                for pivot in range(d):
                    if xt[pivot] == x0[pivot]:
                        continue
                    from .oracle import HybridContext
                    ctx = HybridContext(pivot, x0[:pivot], xt[pivot:], t)
                    out[ctx] = out.get(ctx, 0.0) + q
    return out


def _run_train_consistency(cfg: ExperimentConfig, law: DataLaw, sched: KernelSchedule,
                           decode: DecodeConfig):
    p = cfg.params
    context_tol = float(p.get("context_tol", 0.02))
    plugin_samples = int(p.get("plugin_samples", 20_000)) * cfg.n_replications
    plugin_tol = float(p.get("plugin_tol", 0.03))
    plugin_smoothing = float(p.get("plugin_smoothing", 0.5))
    loss_samples = int(p.get("loss_eval_samples", 20_000))
    loss_tol = float(p.get("loss_tol", 0.02))
    train_cfg = _build_train(cfg.train) if cfg.train is not None else TrainConfig(
        n_samples=200_000, smoothing=0.0, seed=cfg.seed + 1)

    model = train_position_conditioned(law, sched, train_cfg)

    rows = []
    worst = 0.0
    for ctx, mass in sorted(_positive_contexts(law, sched).items(),
                            key=lambda kv: -kv[1]):
        exact = prefix_posterior(law, sched, ctx)
        visits = float(model.counts.get(ctx, np.zeros(law.vocab.size)).sum())
        learned = model.predict(ctx)
        tv = tv_distance(learned, exact)
        worst = max(worst, tv)
        rows.append((ctx.t, ctx.pivot, word_from_tokens(ctx.clean_prefix),
                     ",".join(str(v) for v in ctx.corrupted_suffix),
                     mass, int(visits), tv))
    metrics = [MetricRow("max_context_tv", worst, context_tol,
                         _pass_fail(worst, context_tol))]

    plugin = model.with_smoothing(plugin_smoothing)
    pred = ExactPredictor(law, sched)
    pair = PredictorPair(plugin, pred)
    start = _masked_start(law)
    t = sched.steps
    rng = SeededRng(cfg.seed).derive(3)
    samples = [decode_speculative(start, t, pair, decode, rng)[0]
               for _ in range(plugin_samples)]
    positions = list(range(law.dim))
    plugin_emp = empirical_joint(samples, positions).probs(law.vocab.size)
    oracle = pred.joint(start, t, positions)
    plugin_tv = tv_distance(plugin_emp, oracle)
    metrics.append(MetricRow("plugin_decode_tv", plugin_tv, plugin_tol,
                             _pass_fail(plugin_tv, plugin_tol)))

    loss_model = loss_eval(plugin, law, sched, loss_samples, SeededRng(cfg.seed).derive(4))
    loss_oracle = loss_eval(pred, law, sched, loss_samples, SeededRng(cfg.seed).derive(4))
    entropy = exact_conditional_entropy(law, sched)
    gap = loss_oracle - loss_model
    metrics.append(MetricRow("oracle_loss_excess", gap, loss_tol,
                             _pass_fail(gap, loss_tol),
                             note="oracle loss may not beat the trained loss by more"))
    metrics.append(MetricRow("loss_model", loss_model, None, None))
    metrics.append(MetricRow("loss_oracle", loss_oracle, None, None))
    metrics.append(MetricRow("exact_entropy", entropy, None, None))

    tables = [
        Table("train_contexts",
              ("t", "pivot", "prefix", "suffix", "mass", "visits", "tv"),
              tuple(rows)),
        Table("train_losses",
              ("quantity", "value"),
              (("loss_model", loss_model), ("loss_oracle", loss_oracle),
               ("exact_entropy", entropy))),
    ]
    summary = {"train_samples": train_cfg.n_samples, "contexts": len(rows),
               "plugin_samples": plugin_samples}
    return metrics, tables, summary


def _run_full_inference(cfg: ExperimentConfig, law: DataLaw, sched: KernelSchedule,
                        decode: DecodeConfig):
    p = cfg.params
    n_runs = int(p.get("n_runs", 20_000)) * cfg.n_replications
    min_visits = int(p.get("min_visits", 1000))
    tol = float(p.get("tol", 0.03))
    if decode.n_steps < 2:
        raise InvariantError("decode.n_steps: full-inference needs at least two passes")
    pred = ExactPredictor(law, sched)
    pair = PredictorPair(pred, pred)
    start = _masked_start(law)
    t_later = decode.recorrupt_t if decode.recorrupt_t is not None else sched.steps
    rng = SeededRng(cfg.seed)

    cells: dict = {}
    for _ in range(n_runs):
        final, traces = full_inference(start, pair, decode, sched, rng)
        mid = list(start)
        for rec in traces[0].rounds:
            for pos, tok in zip(rec.positions, rec.committed):
                mid[pos] = tok
        selected = tuple(sorted({pos for rec in traces[1].rounds
                                 for pos in rec.positions[: len(rec.committed)]}))
        if not selected:
            continue
        key = (tuple(mid), selected)
        bucket = cells.setdefault(key, {})
        outcome = tuple(final[pos] for pos in selected)
        bucket[outcome] = bucket.get(outcome, 0) + 1

    rows = []
    worst = 0.0
    checked = 0
    for (mid, selected), bucket in sorted(cells.items()):
        visits = sum(bucket.values())
        if visits < min_visits:
            rows.append((word_from_tokens(mid), ",".join(str(v) for v in selected),
                         visits, float("nan"), "skipped"))
            continue
        oracle = recorruption_conditional(law, sched, mid, selected, t_later)
        emp = np.zeros_like(oracle)
        for outcome, count in bucket.items():
            emp[sequence_code(outcome, law.vocab.size)] = count / visits
        tv = tv_distance(emp, oracle)
        worst = max(worst, tv)
        checked += 1
        rows.append((word_from_tokens(mid), ",".join(str(v) for v in selected),
                     visits, tv, "pass" if tv <= tol else "fail"))
    metrics = [
        MetricRow("max_cell_tv", worst, tol, _pass_fail(worst, tol) and checked > 0),
        MetricRow("cells_checked", float(checked), None, checked > 0,
                  note=f"cells with at least {min_visits} visits"),
    ]
    tables = [Table("full_inference_cells",
                    ("pass1_output", "selected", "visits", "tv", "verdict"),
                    tuple(rows))]
    return metrics, tables, {"n_runs": n_runs, "cells_total": len(cells),
                             "cells_checked": checked}


def _trace_summary(traces: Sequence[SpecTrace]) -> dict:
    if not traces:
        return {}
    out = {
        "decodes": len(traces),
        "rounds": sum(len(t.rounds) for t in traces),
        "draft_passes": sum(t.draft_passes for t in traces),
        "verify_passes": sum(t.verify_passes for t in traces),
        "proposals": sum(t.proposals_total for t in traces),
        "accepts": sum(t.accepts_total for t in traces),
    }
    if out["proposals"]:
        out["alpha_hat"] = out["accepts"] / out["proposals"]
    return out


_RUNNERS: dict[str, Callable] = {
    "exactness": _run_exactness,
    "prefix-identity": _run_prefix_identity,
    "committed-length": _run_committed_length,
    "speedup": _run_speedup,
    "factorization-gap": _run_factorization_gap,
    "train-consistency": _run_train_consistency,
    "full-inference": _run_full_inference,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute one configured experiment; fully deterministic in (config, seed)."""
    law = build_law(cfg.law)
    sched = build_schedule(cfg.schedule, law.vocab)
    decode = build_decode(cfg.decode)
    started = time.perf_counter()
    metrics, tables, summary = _RUNNERS[cfg.kind](cfg, law, sched, decode)
    elapsed = time.perf_counter() - started
    return ExperimentReport(kind=cfg.kind, config=serialize_config(cfg),
                            metrics=list(metrics), tables=list(tables),
                            summary=dict(summary), runtime_seconds=elapsed)


# ---- emission ---------------------------------------------------------------


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def emit_report(report: ExperimentReport, outdir: str | Path) -> dict[str, Path]:
    """Write report.json, one CSV per metric table, and (when enabled) one
    figure per table family. Every file lands via write-then-rename so a
    crashed run never leaves a half-written artifact behind."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    for table in report.tables:
        lines = [",".join(table.columns)]
        for row in table.rows:
            lines.append(",".join(_format_cell(v) for v in row))
        path = out / f"{table.name}.csv"
        _atomic_write(path, "\n".join(lines) + "\n")
        written[table.name] = path

    doc = {
        "kind": report.kind,
        "config": report.config,
        "metrics": [
            {"name": m.name, "value": m.value, "tolerance": m.tolerance,
             "passed": m.passed, "note": m.note}
            for m in report.metrics
        ],
        "summary": report.summary,
        "tables": {t.name: f"{t.name}.csv" for t in report.tables},
        "runtime_seconds": report.runtime_seconds,
        "exit_code": report.exit_code,
    }
    path = out / "report.json"
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    written["report"] = path

    if report.config.get("figures", True):
        from .figures import render_figures
        for fig_path in render_figures(report, out):
            written[Path(fig_path).stem + "_figure"] = Path(fig_path)
    return written


# ---- named suites -----------------------------------------------------------

_ANTICORR = {"name": "table", "vocab_size": 2, "dim": 2, "table": {"ab": 0.5, "ba": 0.5}}
_CORR = {"name": "table", "vocab_size": 2, "dim": 2, "table": {"aa": 0.6, "bb": 0.4}}
_RICH2 = {"name": "table", "vocab_size": 2, "dim": 2,
          "table": {"aa": 0.4, "ab": 0.2, "ba": 0.1, "bb": 0.3}}
_SCHED2 = {"kind": "absorbing", "steps": 2, "betas": [0.5, 0.5]}


def _suite_acceptance() -> list[tuple[str, dict]]:
    return [
        ("exactness_anticorrelated", {
            "kind": "exactness", "seed": 11, "law": _ANTICORR, "schedule": _SCHED2,
            "decode": {"window": 2}, "params": {"n_samples": 100_000}}),
        ("exactness_correlated", {
            "kind": "exactness", "seed": 12, "law": _CORR, "schedule": _SCHED2,
            "decode": {"window": 2}, "params": {"n_samples": 100_000}}),
        ("exactness_random_s3", {
            "kind": "exactness", "seed": 13,
            "law": {"name": "random", "vocab_size": 3, "dim": 3, "seed": 5},
            "schedule": {"kind": "absorbing", "steps": 2, "betas": [0.4, 0.6]},
            "decode": {"window": 2}, "params": {"n_samples": 100_000}}),
        ("exactness_markov", {
            "kind": "exactness", "seed": 14,
            "law": {"name": "markov", "vocab_size": 2, "dim": 4,
                    "initial": [0.7, 0.3],
                    "transition": [[0.8, 0.2], [0.3, 0.7]]},
            "schedule": _SCHED2,
            "decode": {"window": 2}, "params": {"n_samples": 100_000}}),
        ("prefix_identity", {
            "kind": "prefix-identity", "seed": 15, "params": {"n_trials": 100}}),
        ("committed_length", {
            "kind": "committed-length", "seed": 16, "params": {"n_rounds": 1_000_000}}),
        ("speedup", {
            "kind": "speedup", "seed": 17,
            "params": {"pair_decodes": 1000, "mass_rounds": 100_000}}),
        ("factorization_gap", {
            "kind": "factorization-gap", "seed": 18, "law": _ANTICORR,
            "schedule": _SCHED2, "decode": {"window": 2},
            "params": {"n_samples": 100_000}}),
        ("train_consistency", {
            "kind": "train-consistency", "seed": 19, "law": _CORR, "schedule": _SCHED2,
            "decode": {"window": 2},
            "train": {"n_samples": 1_000_000, "smoothing": 0.0, "seed": 20},
            "params": {"plugin_samples": 100_000}}),
        ("full_inference", {
            "kind": "full-inference", "seed": 21, "law": _RICH2, "schedule": _SCHED2,
            "decode": {"window": 2, "n_steps": 2, "remask_budget": 1},
            "params": {"n_runs": 100_000, "min_visits": 1000}}),
    ]


def _suite_smoke() -> list[tuple[str, dict]]:
    return [
        ("exactness_anticorrelated", {
            "kind": "exactness", "seed": 11, "law": _ANTICORR, "schedule": _SCHED2,
            "decode": {"window": 2}, "params": {"n_samples": 4000, "tol": 0.05}}),
        ("prefix_identity", {
            "kind": "prefix-identity", "seed": 15, "params": {"n_trials": 25}}),
        ("committed_length", {
            "kind": "committed-length", "seed": 16,
            "params": {"n_rounds": 40_000, "alphas": [0.0, 0.5, 1.0], "ks": [1, 4, 16]}}),
        ("speedup", {
            "kind": "speedup", "seed": 17,
            "params": {"pair_count": 3, "pair_decodes": 200, "mass_pairs": 5,
                       "mass_rounds": 20_000}}),
        ("factorization_gap", {
            "kind": "factorization-gap", "seed": 18, "law": _ANTICORR,
            "schedule": _SCHED2, "decode": {"window": 2},
            "params": {"n_samples": 20_000, "indep_tol": 0.02, "spec_tol": 0.01}}),
        ("train_consistency", {
            "kind": "train-consistency", "seed": 19, "law": _CORR, "schedule": _SCHED2,
            "decode": {"window": 2},
            "train": {"n_samples": 100_000, "smoothing": 0.0, "seed": 20},
            "params": {"plugin_samples": 10_000, "context_tol": 0.05}}),
        ("full_inference", {
            "kind": "full-inference", "seed": 21, "law": _RICH2, "schedule": _SCHED2,
            "decode": {"window": 2, "n_steps": 2, "remask_budget": 1},
            "params": {"n_runs": 20_000, "min_visits": 400, "tol": 0.05}}),
    ]


SUITES: dict[str, Callable[[], list[tuple[str, dict]]]] = {
    "acceptance": _suite_acceptance,
    "smoke": _suite_smoke,
}


def run_suite(name: str, out_root: str | Path, seed: int | None = None,
              replications: int | None = None) -> tuple[int, list[tuple[str, ExperimentReport]]]:
    """Run every experiment in a named suite; returns the worst exit code and
    the reports. Each experiment lands in its own subdirectory."""
    if name not in SUITES:
        raise SchemaError(f"unknown suite {name!r}; available: {sorted(SUITES)}")
    root = Path(out_root)
    reports: list[tuple[str, ExperimentReport]] = []
    worst = 0
    summary_rows = []
    for exp_name, doc in SUITES[name]():
        doc = dict(doc)
        if seed is not None:
            doc["seed"] = seed
        if replications is not None:
            doc["n_replications"] = replications
        cfg = parse_config(doc)
        report = run_experiment(cfg)
        emit_report(report, root / exp_name)
        reports.append((exp_name, report))
        worst = max(worst, report.exit_code)
        for m in report.metrics:
            if m.passed is not None:
                summary_rows.append((exp_name, m.name, m.value,
                                     "" if m.tolerance is None else m.tolerance,
                                     "pass" if m.passed else "fail"))
    lines = ["experiment,metric,value,tolerance,verdict"]
    for row in summary_rows:
        lines.append(",".join(_format_cell(v) for v in row))
    root.mkdir(parents=True, exist_ok=True)
    _atomic_write(root / "suite_summary.csv", "\n".join(lines) + "\n")
    return worst, reports
