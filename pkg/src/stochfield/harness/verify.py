"""Property checks behind ``verify-all``.

Each ``criterion_*`` function draws its own instances from
``default_rng([seed, number])`` and returns a :class:`CheckResult`.  The
numeric content of a result is a pure function of ``(seed, paths)``; wall
times are kept apart as metadata.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.stats

from ..algebra import basis_delta
from ..dynamics import Chain, integrated_expm, time_averaged_state
from ..exceptions import FieldError
from ..generators import (assemble_system, commutator_norm, embed_local, lift, local_projection, pi_matrix,
                          validate_generator)
from ..gradient import (fd_gradient_local, fd_gradient_system, grad_local, grad_system, grad_system_direct,
                        relative_error)
from ..instances import (constant_frequency_generator, cycle_generator, jump_pairs, random_delta_closed,
                         random_field, random_generator, random_network, random_objective, two_state_generator,
                         two_state_signal)
from ..learning import StrategySet, TrainerConfig, build_random_search, train_gradient_descent
from ..objective import build_objective, expected_signal_closed_form, expected_signal_quadrature, objective_value
from ..propagation import (check_uniform_value, p_matrix, pq_matrix, propagated_local_gradient, propagated_value,
                           solve_effective_objectives)
from ..topology import build_topology
from ..trajectories import (entropy_bound_check, field_lagrangian_terms, mc_expected_signal, mc_transition_row,
                            sample_path)
from ..generators import LocalGeneratorTable, derive_diagonal
from .report import _jsonable

DEFAULT_PATHS = 100_000
PATH_DENSITY_PATHS = 1000
N_FIELDS = 50


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    runtime: float = 0.0
    budget: float | None = None

    @property
    def within_budget(self):
        return self.budget is None or self.runtime < self.budget

    def to_dict(self, include_meta=True):
        out = {"number": self.number, "name": self.name, "passed": self.passed, "metrics": self.metrics,
               "notes": self.notes}
        if self.budget is not None:
            out["budget_s"] = self.budget
        if include_meta:
            out["meta"] = {"runtime_s": self.runtime, "within_budget": self.within_budget}
        return _jsonable(out)


def _rng(seed, number):
    return np.random.default_rng([int(seed), number])


def _subseed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, dtype=np.uint64)[0])


# -- 1, 2: decomposition and commutation -------------------------------------------

def _oracle_system(T, tables):
    """Global generator built directly from the transition table.

    For every ordered pair of configurations it finds the single node whose
    digits differ and reads that node's rate; pairs that differ in the
    digits of two or more nodes get rate zero.
    """
    D = T.omega.all_digits()
    N = D.shape[0]
    changed = D[:, None, :] != D[None, :, :]  # [dest, src, factor]
    G = np.zeros((N, N))
    for i in range(len(T.nodes)):
        own = np.zeros(len(T.factors), dtype=bool)
        own[list(T.local_region(i).factors)] = True
        only = changed[:, :, own].any(axis=2) & ~changed[:, :, ~own].any(axis=2)
        dd, ss = np.nonzero(only)
        loc = T.local_region(i).index_of_state
        obs = T.observed_region(i).index_of_state
        G[dd, ss] = tables[i].rates[loc[dd], obs[ss]]
    G[np.arange(N), np.arange(N)] = -G.sum(axis=0)
    return G


def _fields(seed):
    rng = _rng(seed, 1)
    return [random_field(rng, max_states=256) for _ in range(N_FIELDS)]


def criterion_1(seed=0, paths=None):
    fields = _fields(seed)
    t0 = time.perf_counter()
    worst_sum = worst_oracle = worst_col = 0.0
    sizes = []
    for T, tables in fields:
        G = assemble_system(T, tables)
        S = sum(embed_local(T, tables[i]) for i in range(len(T.nodes)))
        worst_sum = max(worst_sum, float(np.abs(G - S).max()))
        worst_oracle = max(worst_oracle, float(np.abs(G - _oracle_system(T, tables)).max()))
        worst_col = max(worst_col, float(np.abs(G.sum(axis=0)).max()))
        validate_generator(G)
        sizes.append(T.n_states)
    elapsed = time.perf_counter() - t0
    m = {"n_fields": len(fields), "max_states": max(sizes), "max_abs_G_minus_sum_embeddings": worst_sum,
         "max_abs_G_minus_transition_oracle": worst_oracle, "max_abs_column_sum": worst_col}
    ok = worst_sum < 1e-13 and worst_oracle < 1e-13 and worst_col <= 1e-12
    r = CheckResult(1, "generator decomposition", ok, m, budget=5.0)
    r.runtime = elapsed
    return r


def criterion_2(seed=0, paths=None):
    worst = 0.0
    worst_neighbor = 0.0
    n_pairs = 0
    for T, tables in _fields(seed):
        for a, b in T.non_neighbor_pairs():
            worst = max(worst, commutator_norm(T, a, b, tables))
            n_pairs += 1
        n = len(T.nodes)
        for a in range(n):
            for b in range(a + 1, n):
                if T.are_neighbors(a, b):
                    worst_neighbor = max(worst_neighbor, commutator_norm(T, a, b, tables))
    m = {"n_non_neighbor_pairs": n_pairs, "max_commutator_non_neighbors": worst,
         "max_commutator_neighbors": worst_neighbor}
    notes = ["neighbor commutators are reported as a control; they are expected to be nonzero"]
    return CheckResult(2, "commutation of non-neighbors", n_pairs > 0 and worst <= 1e-12, m, notes)


# -- 3-6: sampling -----------------------------------------------------------------

def criterion_3(seed=0, paths=None):
    n = int(paths or DEFAULT_PATHS)
    rng = _rng(seed, 3)
    T = 1.0
    worst_z = 0.0
    n_cmp = n_out = 0
    expected_out = 0.0
    for k in range(10):
        N = int(rng.integers(2, 9))
        G = random_generator(rng, N)
        E = scipy.linalg.expm(G * T)
        for w in range(N):
            row = mc_transition_row(G, w, T, n, _subseed(seed, 3, k, w))
            for wp in range(N):
                p = float(E[wp, w])
                sd = math.sqrt(max(p * (1 - p), 0.0) / n)
                z = abs(row[wp].estimate - p) / sd if sd > 0 else (0.0 if row[wp].estimate == p else math.inf)
                worst_z = max(worst_z, z)
                n_cmp += 1
                n_out += z > 3.0
                expected_out += math.erfc(3.0 / math.sqrt(2.0))
    # family-wise level of a single 3-sigma test, spread over all comparisons
    z_family = float(scipy.stats.norm.isf(math.erfc(3.0 / math.sqrt(2.0)) / (2 * n_cmp)))
    m = {"paths": n, "n_comparisons": n_cmp, "max_abs_z": worst_z, "n_beyond_3sigma": int(n_out),
         "expected_beyond_3sigma_if_exact": expected_out, "familywise_z_threshold": z_family,
         "supplementary_familywise_passed": worst_z <= z_family}
    notes = ["sigma is the binomial standard error at the exact probability",
             "with several hundred comparisons an exact sampler exceeds 3 sigma about once on average; the "
             "supplementary check applies the same 3-sigma error rate to the whole family (Bonferroni)"]
    return CheckResult(3, "master equation vs sampling", n_out == 0, m, notes, budget=60.0)


def criterion_4(seed=0, paths=None):
    n = min(int(paths or PATH_DENSITY_PATHS), PATH_DENSITY_PATHS)
    rng = _rng(seed, 4)
    worst = 0.0
    total_jumps = 0
    for k in range(10):
        T, tables = random_field(rng, n_nodes=int(rng.integers(2, 4)), max_states=32)
        G = assemble_system(T, tables)
        for j in range(n):
            start = int(rng.integers(T.n_states))
            path = sample_path(G, start, 2.0, _subseed(seed, 4, k, j))
            total_jumps += path.n_jumps
            lag = math.fsum(field_lagrangian_terms(T, tables, path))
            worst = max(worst, abs(-lag - path.log_density))
    m = {"paths_per_system": n, "total_jumps": total_jumps, "max_abs_log_density_difference": worst}
    return CheckResult(4, "path density identity", worst <= 1e-10, m)


def criterion_5(seed=0, paths=None):
    n = int(paths or DEFAULT_PATHS)
    rng = _rng(seed, 5)
    worst_z = 0.0
    n_out = 0
    rows = []
    for k in range(10):
        N = int(rng.integers(2, 7))
        G = random_generator(rng, N)
        gamma = random_objective(rng, N, density=0.5)
        for T in (1.0, 10.0):
            q = expected_signal_quadrature(gamma, G, 0, T)
            mc = mc_expected_signal(G, gamma, 0, T, n, _subseed(seed, 5, k, int(T)))
            z = abs(mc.estimate - q) / mc.stderr if mc.stderr > 0 else (0.0 if mc.estimate == q else math.inf)
            worst_z = max(worst_z, z)
            n_out += z > 3.0
            rows.append({"system": k, "T": T, "quadrature": q, "mc": mc.estimate, "stderr": mc.stderr})
    G2, g2 = two_state_generator(), two_state_signal()
    quad2 = expected_signal_quadrature(g2, G2, 0, 1.0)
    formula = 2.0 / 3.0 + (1.0 - math.exp(-3.0)) / 9.0
    quoted = 0.772318
    two_ok = abs(quad2 - formula) < 5e-5 and f"{quad2:.4g}" == f"{formula:.4g}"
    m = {"paths": n, "max_abs_z": worst_z, "n_beyond_3sigma": int(n_out), "comparisons": rows,
         "two_state_quadrature": quad2, "two_state_closed_form": formula,
         "two_state_closed_form_vs_quadrature": abs(quad2 - formula),
         "quoted_constant": quoted, "quoted_constant_vs_closed_form": abs(quoted - formula)}
    notes = ["two-state value is checked against the closed form 2/3 + (1 - e^-3)/9; the quoted constant "
             "0.772318 differs from that expression by 7.2e-5 and is reported only"]
    return CheckResult(5, "expected signal formula", n_out == 0 and two_ok, m, notes)


def criterion_6(seed=0, paths=None):
    n = int(paths or DEFAULT_PATHS)
    rng = _rng(seed, 6)
    cases = [
        ("cycle2_K1", cycle_generator(2, 1.0), 5.0, True),
        ("cycle3_K2", cycle_generator(3, 2.0), 1.0, True),
        ("uniform3_K1", (np.ones((3, 3)) - 3 * np.eye(3)) / 2.0, 1.0, False),
        ("random4_K0.5", constant_frequency_generator(rng, 4, 0.5), 2.0, False),
        ("random5_K1.5", constant_frequency_generator(rng, 5, 1.5), 2.0, False),
    ]
    ok = True
    rows = []
    for k, (name, G, T, equality) in enumerate(cases):
        chk = entropy_bound_check(G, T, 0, n, _subseed(seed, 6, k))
        slack = 3.0 * chk.stderr
        floor = 1e-12 * max(1.0, abs(chk.bound))
        bound_ok = chk.mc_mean >= chk.bound - max(slack, floor)
        eq_ok = abs(chk.mc_mean - chk.bound) <= max(slack, floor) if equality else None
        ok = ok and bound_ok and (eq_ok is not False)
        rows.append({"instance": name, "T": T, "mc_mean": chk.mc_mean, "stderr": chk.stderr, "bound": chk.bound,
                     "analytic_mean": chk.analytic_mean, "bound_ok": bound_ok, "equality_ok": eq_ok})
    notes = ["a zero-variance estimate (deterministic jumps at unit rate) is compared with an absolute floor "
             "of 1e-12 relative to the bound"]
    return CheckResult(6, "entropy bound", ok, {"paths": n, "instances": rows}, notes)


# -- 7, 8: stationary states and operator identities -----------------------------

def criterion_7(seed=0, paths=None):
    rng = _rng(seed, 7)
    gens = [("two_state", two_state_generator())]
    for k in range(5):
        gens.append((f"random{k}", random_generator(rng, int(rng.integers(3, 9)))))
    T = 100.0
    worst_res = worst_avg = worst_quad = 0.0
    rows = []
    for name, G in gens:
        ch = Chain(G)
        rep = ch.stationary()
        e = np.zeros(ch.n)
        e[0] = 1.0
        avg = time_averaged_state(G, e, T)
        closed = integrated_expm(ch, T) @ e / T
        dev = float(np.abs(avg - rep.stationary).max())
        qerr = float(np.abs(avg - closed).max())
        worst_res = max(worst_res, rep.residual)
        worst_avg = max(worst_avg, dev)
        worst_quad = max(worst_quad, qerr)
        rows.append({"instance": name, "ergodic": rep.ergodic, "residual": rep.residual,
                     "average_minus_stationary": dev, "T_times_deviation": dev * T,
                     "quadrature_minus_closed_form": qerr})
    two = Chain(two_state_generator()).stationary_vector
    two_err = float(np.abs(two - np.array([2.0 / 3.0, 1.0 / 3.0])).max())
    literal = worst_res <= 1e-10 and worst_avg <= 1e-6 and two_err <= 1e-12
    m = {"T": T, "max_residual": worst_res, "max_average_minus_stationary": worst_avg,
         "max_quadrature_minus_closed_form": worst_quad, "two_state_error": two_err, "instances": rows,
         "supplementary_finite_T_check_passed": worst_res <= 1e-10 and worst_quad <= 1e-6 and two_err <= 1e-12}
    notes = ["the finite-horizon average from a point mass differs from the stationary state by "
             "(1 - exp(G T)) D phi0 / T, which is of order 1e-3 at T = 100 on these instances; the 1e-6 "
             "tolerance on that difference is not attainable, so this check is expected to fail",
             "the supplementary check compares the quadrature with the exact finite-T average instead"]
    return CheckResult(7, "stationary and averaged state", literal, m, notes)


def _delta_basis_check(ch):
    """``max |(1 + Pi G~ S) y - Phi y|`` over a basis of the sum-zero subspace."""
    n = ch.n
    L = lift(ch.G)
    Pi = pi_matrix(n)
    worst = 0.0
    for y in basis_delta(n).T:
        Sy = ch.apply_S(y)
        lhs = y + Pi @ (L @ Sy)
        worst = max(worst, float(np.abs(lhs - ch.phi @ y).max()))
    return worst


def criterion_8(seed=0, paths=None):
    rng = _rng(seed, 8)
    worst = {k: 0.0 for k in ("lemma", "P_fixes_flux", "P_idempotent", "PQ_fixes_flux", "composition",
                              "variation_P", "variation_PQ")}
    sizes = []
    for k in range(10):
        N = int(rng.integers(3, 17))
        sizes.append(N)
        G = random_generator(rng, N, density=0.6)
        ch = Chain(G)
        phi = ch.stationary_vector
        flux = (lift(G) @ phi)
        worst["lemma"] = max(worst["lemma"], _delta_basis_check(ch))
        P = p_matrix(ch)
        worst["P_fixes_flux"] = max(worst["P_fixes_flux"], float(np.abs(P @ flux - flux).max()))
        worst["P_idempotent"] = max(worst["P_idempotent"], float(np.abs(P @ P - P).max()))
        Q1, Q2 = random_delta_closed(rng, N), random_delta_closed(rng, N)
        PQ1, PQ2 = pq_matrix(ch, Q1), pq_matrix(ch, Q2)
        worst["PQ_fixes_flux"] = max(worst["PQ_fixes_flux"], float(np.abs(PQ1 @ flux - flux).max()))
        comp = pq_matrix(ch, Q1 + Q2 - Q1 @ Q2)
        worst["composition"] = max(worst["composition"], float(np.abs(PQ1 @ PQ2 - comp).max()))
        dG = random_generator(rng, N)
        dG *= 1e-6 / np.abs(dG).max()
        ch2 = Chain(G + dG)
        for label, Q in (("variation_P", np.eye(N)), ("variation_PQ", Q1)):
            delta = (pq_matrix(ch2, Q) - pq_matrix(ch, Q)) @ flux
            worst[label] = max(worst[label], float(np.abs(delta).max()))
    m = {"sizes": sizes, **{f"max_{k}": v for k, v in worst.items()}}
    return CheckResult(8, "deviation lemma and propagator identities", max(worst.values()) <= 1e-9, m)


# -- 9: gradients ---------------------------------------------------------------------

def criterion_9(seed=0, paths=None):
    rng = _rng(seed, 9)
    t0 = time.perf_counter()
    worst_sys = worst_local = worst_dual = 0.0
    n_sys = n_local = 0
    sizes = []
    for k in range(10):
        N = int(rng.integers(2, 17))
        sizes.append(N)
        G = random_generator(rng, N)
        gamma = random_objective(rng, N, density=0.5)
        ga = grad_system(gamma, G)
        gd = grad_system_direct(gamma, G)
        worst_dual = max(worst_dual, max(abs(ga[k2] - gd[k2]) for k2, _ in ga.items()))
        for key, v in ga.items():
            worst_sys = max(worst_sys, relative_error(v, fd_gradient_system(gamma, G, key)))
            n_sys += 1
    for k in range(10):
        T, tables = random_field(rng, n_nodes=int(rng.integers(2, 4)), max_states=16)
        sizes.append(T.n_states)
        gamma = random_objective(rng, T.n_states, pairs=jump_pairs(T), density=0.5)
        G = assemble_system(T, tables)
        ch = Chain(G)
        for x in range(len(T.nodes)):
            gl = grad_local(gamma, T, tables, x, G=ch)
            for key, v in gl.items():
                worst_local = max(worst_local, relative_error(v, fd_gradient_local(gamma, T, tables, x, key)))
                n_local += 1
    G2, g2 = two_state_generator(), two_state_signal()
    g = grad_system(g2, G2)
    two_err = max(abs(g[(1, 0)] - 4.0 / 9.0), abs(g[(0, 1)] - 1.0 / 9.0))
    elapsed = time.perf_counter() - t0
    m = {"sizes": sizes, "n_system_parameters": n_sys, "n_local_parameters": n_local,
         "max_rel_error_system": worst_sys, "max_rel_error_local": worst_local,
         "max_abs_adjoint_vs_direct": worst_dual, "two_state_partials_error": two_err}
    ok = worst_sys <= 1e-5 and worst_local <= 1e-5 and two_err <= 1e-9 and worst_dual <= 1e-9
    notes = ["finite differences are central with step 1e-5; relative error is |a - fd| / max(|fd|, 1e-8)"]
    r = CheckResult(9, "gradient formula", ok, m, notes, budget=120.0)
    r.runtime = elapsed
    return r


# -- 10, 11: propagation -----------------------------------------------------------------

def _networks(rng, count):
    return [random_network(rng, n_acting=int(rng.integers(2, 4)), max_states=16) for _ in range(count)]


def criterion_10(seed=0, paths=None):
    rng = _rng(seed, 10)
    worst = worst_res = 0.0
    rows = []
    ok = True
    for T, tables, net in _networks(rng, 10):
        ch = Chain(assemble_system(T, tables))
        try:
            sol = solve_effective_objectives(net, ch)
        except FieldError as exc:
            ok = False
            rows.append({"error": exc.to_dict()})
            continue
        rep = check_uniform_value(net, ch, sol)
        worst = max(worst, rep.spread)
        worst_res = max(worst_res, sol.residual)
        rows.append({"n_states": T.n_states, "n_acting": len(T.acting()), "strongly_connected": net.strongly_connected,
                     "route": sol.route, "spread": rep.spread, "residual": sol.residual})
        ok = ok and net.strongly_connected
    m = {"max_value_spread": worst, "max_fixed_point_residual": worst_res, "networks": rows}
    return CheckResult(10, "propagation fixed point", ok and worst <= 1e-9, m)


def criterion_11(seed=0, paths=None):
    rng = _rng(seed, 11)
    worst = 0.0
    count = 0
    for T, tables, net in _networks(rng, 5):
        ch = Chain(assemble_system(T, tables))
        for x in T.acting():
            g = propagated_local_gradient(net, tables, x, G=ch)
            vf = lambda tb, x=x: propagated_value(net, assemble_system(T, tb), x)
            for key, v in g.items():
                fd = fd_gradient_local(None, T, tables, x, key, value_fn=vf)
                worst = max(worst, relative_error(v, fd))
                count += 1
    m = {"n_parameters": count, "max_rel_error": worst}
    return CheckResult(11, "local gradients under propagation", worst <= 1e-4, m)


# -- 12: objective-driven dynamics ---------------------------------------------------

def id_case_instance():
    """Environment ``nu`` flipping freely and agent ``alpha`` penalized on 0 -> 1.

    Strategy 0 flips both ways; strategy 1 only returns to 0, so its long-run
    value is zero.
    """
    T = build_topology([("nu", 2, "environmental"), ("alpha", 2, "acting")], [("nu", "alpha", 1)])
    env = LocalGeneratorTable(0, derive_diagonal(np.array([[0.0, 1.0], [1.0, 0.0]]), local_projection(T, 0)))
    N = T.n_states
    a = T.local_region(1).index_of_state
    gamma = build_objective([(d, s, 1.0) for d, s in jump_pairs(T) if a[s] == 0 and a[d] == 1], n_states=N)

    def strat(up, down):
        proj = local_projection(T, 1)
        U = len(T.observed_region(1))
        obs_alpha = [T.observed_region(1).space.decode(u)[-1] for u in range(U)]
        R = np.zeros((2, U))
        for u in range(U):
            R[1 - obs_alpha[u], u] = up if obs_alpha[u] == 0 else down
        return LocalGeneratorTable(1, derive_diagonal(R, proj))

    return T, {0: env}, gamma, [strat(1.0, 1.0), strat(0.0, 1.0)]


def two_entity_training_instance(seed):
    rng = _rng(seed, 120)
    return random_network(rng, n_acting=2, max_states=16)


def criterion_12(seed=0, paths=None):
    T, env, gamma, strategies = id_case_instance()
    rs = build_random_search(T, "alpha", StrategySet(1, strategies), gamma, env)
    vals = [rs.value_from(lab, w) for lab in range(rs.n_labels) for w in range(rs.n_base)]
    vals += [rs.value_from(lab) for lab in range(rs.n_labels)]
    single = [objective_value(gamma, assemble_system(T, {0: env[0], 1: s})) for s in strategies]
    id_ok = max(abs(v) for v in vals) <= 1e-6

    # two-state single parameter: minimize a b / (a + b) over a
    T2 = build_topology([("x", 2)], [])
    t2 = LocalGeneratorTable(0, derive_diagonal(np.array([[0.0, 2.0], [1.0, 0.0]]), local_projection(T2, 0)))
    cfg = TrainerConfig(learning_rate=0.5, n_steps=50, rate_floor=1e-6, params=[(0, (1, 0))])
    tr = train_gradient_descent(T2, {0: t2}, two_state_signal(), [0], cfg)
    a_final = float(tr.tables[0].rates[1, 0])
    tot = tr.totals
    mono2 = all(b <= a + 1e-12 for a, b in zip(tot, tot[1:]))
    floor_ok = a_final == cfg.rate_floor

    Tn, tables, net = two_entity_training_instance(seed)
    cfg_n = TrainerConfig(learning_rate=0.5, n_steps=200, rate_floor=1e-6)
    trn = train_gradient_descent(Tn, tables, net, Tn.acting(), cfg_n)
    totn = trn.totals
    monon = all(b <= a + 1e-12 for a, b in zip(totn, totn[1:]))
    m = {"random_search_values": vals, "max_abs_random_search_value": max(abs(v) for v in vals),
         "single_strategy_values": single,
         "two_state_trace_start": tot[0], "two_state_trace_end": tot[-1], "two_state_final_rate": a_final,
         "two_state_monotone": mono2, "two_state_at_floor": floor_ok,
         "network_steps": len(totn) - 1, "network_trace_start": totn[0], "network_trace_end": totn[-1],
         "network_monotone": monon, "network_halted": trn.halted}
    ok = id_ok and mono2 and floor_ok and monon and trn.halted is None and len(totn) == 201
    return CheckResult(12, "objective-driven dynamics", ok, m)


# -- 13: determinism ---------------------------------------------------------------------

STOCHASTIC = (3, 4, 5, 6)


def criterion_13(seed=0, paths=None):
    n = min(int(paths or DEFAULT_PATHS), 2000)
    runs = []
    for _ in range(2):
        out = [CRITERIA[k](seed, n).to_dict(include_meta=False) for k in STOCHASTIC]
        runs.append(json.dumps(out, sort_keys=True))
    same = runs[0] == runs[1]
    m = {"paths": n, "criteria_rerun": list(STOCHASTIC), "identical": same, "bytes": len(runs[0])}
    notes = ["the CLI-level byte comparison of two verify-all runs lives in the test suite"]
    return CheckResult(13, "determinism", same, m, notes)


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11, 12: criterion_12,
    13: criterion_13,
}


def run_criterion(number, seed=0, paths=None) -> CheckResult:
    t0 = time.perf_counter()
    r = CRITERIA[number](seed, paths)
    if r.budget is None or r.runtime == 0.0:
        r.runtime = time.perf_counter() - t0
    return r


def run_all(seed=0, paths=None, only=None):
    return [run_criterion(k, seed, paths) for k in (only or sorted(CRITERIA))]


def format_line(r: CheckResult) -> str:
    status = "PASS" if r.passed else "FAIL"
    budget = "" if r.budget is None else f" (budget {r.budget:g}s, {'ok' if r.within_budget else 'exceeded'})"
    return f"[{status}] criterion {r.number:2d}: {r.name}{budget}"


# -- checks keyed to a single spec ------------------------------------------------

SPEC_FD_LIMIT = 200
SPEC_PATHS = 20_000


def _local_fd_sweep(T, tables, x, grads, fd_fn, tol):
    worst = 0.0
    n = skipped = 0
    for key, v in grads.items():
        if n >= SPEC_FD_LIMIT:
            break
        if tables[x].rates[key] <= 1e-5:
            skipped += 1  # central stencil would leave the feasible set
            continue
        worst = max(worst, relative_error(v, fd_fn(key)))
        n += 1
    return worst, n, skipped


def verify_spec(spec, seed=0, paths=None, tol=None):
    """Property checks on the instance described by ``spec``.

    Check numbers refer to the same properties as the full suite; checks
    that do not apply to the spec (no signal, no network, non-ergodic
    dynamics) are skipped with a note rather than failed.
    """
    T, tables = spec.topology, spec.tables
    G = assemble_system(T, tables)
    ch = Chain(G)
    out = []

    def timed(number, name, fn):
        t0 = time.perf_counter()
        r = fn()
        r.number, r.name, r.runtime = number, name, time.perf_counter() - t0
        out.append(r)

    def dec():
        S = sum(embed_local(T, tables[i]) for i in range(len(T.nodes)))
        m = {"max_abs_G_minus_sum_embeddings": float(np.abs(G - S).max()),
             "max_abs_G_minus_transition_oracle": float(np.abs(G - _oracle_system(T, tables)).max()),
             "max_abs_column_sum": float(np.abs(G.sum(axis=0)).max())}
        ok = m["max_abs_G_minus_sum_embeddings"] < 1e-13 and m["max_abs_G_minus_transition_oracle"] < 1e-13 \
            and m["max_abs_column_sum"] <= 1e-12
        return CheckResult(0, "", ok, m)

    def comm():
        pairs = T.non_neighbor_pairs()
        w = max((commutator_norm(T, a, b, tables) for a, b in pairs), default=0.0)
        notes = [] if pairs else ["no non-neighbor pairs; vacuous"]
        return CheckResult(0, "", w <= 1e-12, {"n_pairs": len(pairs), "max_commutator": w}, notes)

    def dens():
        n = min(int(paths or 200), PATH_DENSITY_PATHS)
        worst = 0.0
        for j in range(n):
            path = sample_path(G, j % T.n_states, 1.0, _subseed(seed, 4, j))
            worst = max(worst, abs(-math.fsum(field_lagrangian_terms(T, tables, path)) - path.log_density))
        return CheckResult(0, "", worst <= 1e-10, {"paths": n, "max_abs_log_density_difference": worst})

    def stat():
        rep = ch.stationary()
        return CheckResult(0, "", rep.residual <= 1e-10, {"ergodic": rep.ergodic, "null_dim": rep.null_dim,
                                                          "residual": rep.residual})

    timed(1, "generator decomposition", dec)
    timed(2, "commutation of non-neighbors", comm)
    timed(4, "path density identity", dens)
    timed(7, "stationary state", stat)
    if not ch.ergodic:
        out.append(CheckResult(8, "remaining checks", True, {}, ["dynamics not ergodic; gradient and "
                                                                  "propagation checks skipped"]))
        return out

    def ops():
        if ch.n > 32:
            return CheckResult(0, "", True, {}, ["lifted operator checks are limited to |Omega| <= 32"])
        flux = lift(G) @ ch.stationary_vector
        P = p_matrix(ch)
        m = {"max_lemma": _delta_basis_check(ch), "max_P_fixes_flux": float(np.abs(P @ flux - flux).max()),
             "max_P_idempotent": float(np.abs(P @ P - P).max())}
        return CheckResult(0, "", max(m.values()) <= 1e-9, m)

    timed(8, "deviation lemma and propagator identities", ops)
    ftol = 1e-5 if tol is None else tol
    if spec.signal is not None:
        gamma = spec.signal

        def grad():
            worst, n, skipped = 0.0, 0, 0
            for x in range(len(T.nodes)):
                g = grad_local(gamma, T, tables, x, G=ch)
                w, k, s = _local_fd_sweep(T, tables, x, g, lambda key, x=x: fd_gradient_local(gamma, T, tables,
                                                                                              x, key), ftol)
                worst, n, skipped = max(worst, w), n + k, skipped + s
            return CheckResult(0, "", worst <= ftol, {"n_parameters": n, "skipped_zero_rates": skipped,
                                                      "max_rel_error": worst, "tolerance": ftol})

        def sig():
            n = int(paths or SPEC_PATHS)
            q = expected_signal_quadrature(gamma, ch, 0, 1.0)
            mc = mc_expected_signal(G, gamma, 0, 1.0, n, _subseed(seed, 5))
            z = abs(mc.estimate - q) / mc.stderr if mc.stderr > 0 else (0.0 if abs(mc.estimate - q) < 1e-12
                                                                       else math.inf)
            return CheckResult(0, "", z <= 3.0, {"paths": n, "quadrature": q, "mc": mc.estimate,
                                                 "stderr": mc.stderr, "z": z})

        timed(5, "expected signal formula", sig)
        timed(9, "gradient formula", grad)
    net = spec.network
    if net is not None and net.acting:
        def fixed():
            sol = solve_effective_objectives(net, ch)
            rep = check_uniform_value(net, ch, sol)
            return CheckResult(0, "", rep.spread <= 1e-9, {"spread": rep.spread, "residual": sol.residual,
                                                           "strongly_connected": net.strongly_connected})

        timed(10, "propagation fixed point", fixed)
        if net.all_pq() and net.strongly_connected:
            def pgrad():
                worst, n, skipped = 0.0, 0, 0
                for x in T.acting():
                    g = propagated_local_gradient(net, tables, x, G=ch)
                    vf = lambda tb, x=x: propagated_value(net, assemble_system(T, tb), x)
                    w, k, s = _local_fd_sweep(T, tables, x, g, lambda key, x=x, vf=vf: fd_gradient_local(
                        None, T, tables, x, key, value_fn=vf), 1e-4)
                    worst, n, skipped = max(worst, w), n + k, skipped + s
                gt = 1e-4 if tol is None else tol
                return CheckResult(0, "", worst <= gt, {"n_parameters": n, "skipped_zero_rates": skipped,
                                                        "max_rel_error": worst, "tolerance": gt})

            timed(11, "local gradients under propagation", pgrad)
    return out
