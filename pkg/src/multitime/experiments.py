"""Experiment runners behind the command line.

Every runner takes a validated parameter dict, a tolerance table and a numpy
generator, and returns a :class:`Run`: rows for the CSV report plus named
pass/fail checks for the manifest.  Checks that were not requested are not
run, so an empty check list yields an empty manifest.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import born, consistency, qft, tomonaga, zerorange
from .fock import CouplingSpec, CutoffProfile, FockSpace, LatticeSpec, build_hamiltonian, random_state
from .spacetime import Hypersurface

# tolerances per profile; "strict" asks for machine-level agreement where the
# quantity is an identity and keeps the convergence windows unchanged
_DEFAULT = {
    "unitarity": 1e-6, "boundary": 1e-8, "current": 1e-8, "covariance": 1e-6,
    "purity_drop": 0.99, "purity_keep": 1e-6,
    "slope_width_oracle": 0.2, "slope_width_equations": 0.3, "slope_width_ts": 0.2,
    "commuting": 1e-8, "no_go": 1e-3, "equal_time": 1e-8, "statistics": 1e-8,
    "probability": 1e-6, "free1_tv": 0.02, "pair_tv": 0.05, "mutual_information": 1e-3,
}
_STRICT = dict(_DEFAULT, unitarity=1e-12, boundary=1e-12, current=1e-12, covariance=1e-12,
               commuting=1e-10, equal_time=1e-12, statistics=1e-12, probability=1e-12)
PROFILES = {"default": _DEFAULT, "strict": _STRICT}


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    relation: str            # "<", ">", "<=", "in [a, b]"
    passed: bool
    detail: str = ""

    def as_dict(self) -> dict:
        d = asdict(self)
        d["value"] = _json_float(self.value)
        return d


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def below(name, value, tol, detail="") -> Check:
    return Check(name, float(value), tol, "<", bool(value < tol), detail)


def above(name, value, tol, detail="") -> Check:
    return Check(name, float(value), tol, ">", bool(value > tol), detail)


def within(name, value, target, width, detail="") -> Check:
    lo, hi = target - width, target + width
    return Check(name, float(value), width, f"in [{lo:g}, {hi:g}]", bool(lo <= value <= hi), detail)


@dataclass
class Run:
    columns: tuple
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)


def fitted_slope(steps, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(steps)``."""
    values = np.asarray(values, float)
    if np.any(values <= 0):
        return float("nan")
    return float(np.polyfit(np.log(steps), np.log(values), 1)[0])


# --------------------------------------------------------------------------
# zerorange
# --------------------------------------------------------------------------

UP, DOWN = (1.0, 0.0), (0.0, 1.0)
DEFAULT_PACKETS = (
    zerorange.GaussianPacket(-1.2, 0.2, 1.0, (1, 0.7j)),
    zerorange.GaussianPacket(1.2, 0.2, -0.5, (0.4, 1)),
)
# particle 1 runs away to the left at light speed, so the pair never meets
NON_CROSSING = (
    zerorange.GaussianPacket(-1.2, 0.2, 1.0, DOWN),
    zerorange.GaussianPacket(1.2, 0.2, 0.0, (1, 0.3)),
)
TEST_SURFACES = {
    "slope-1/2": Hypersurface(((-4.0, -1.0), (4.0, 3.0))),
    "kinked": Hypersurface(((-3.0, 0.2), (0.0, 1.6), (3.0, 0.4))),
}


def parse_initial(spec: str) -> zerorange.InitialData:
    """``builtin-gaussian``, a ``.npz`` grid file, or JSON ``[{center, width, momentum, spinor}, {...}]``.

    Spinor entries are numbers or ``[re, im]`` pairs.
    """
    if spec in ("builtin-gaussian", "gaussian"):
        return zerorange.ProductData(*DEFAULT_PACKETS)
    if spec.endswith(".npz"):
        return zerorange.GridData.load(spec)
    items = json.loads(spec)
    if not (isinstance(items, list) and len(items) == 2):
        raise ValueError("initial data JSON must list two packets")

    def num(v):
        return complex(*v) if isinstance(v, list) else complex(v)

    packets = []
    for it in items:
        unknown = set(it) - {"center", "width", "momentum", "spinor"}
        if unknown:
            raise ValueError(f"unknown packet keys: {sorted(unknown)}")
        spinor = tuple(num(v) for v in it.get("spinor", [1, 0]))
        packets.append(zerorange.GaussianPacket(float(it["center"]), float(it["width"]),
                                                float(it.get("momentum", 0.0)), spinor))
    return zerorange.ProductData(*packets)


def boundary_error(model: zerorange.ZeroRangeModel, n: int = 50, times=(0.2, 2.5), z=(-0.5, 0.8)) -> float:
    """Relative violation of the one-sided boundary relation along ``n`` collision points."""
    t = np.linspace(*times, n)
    zz = np.linspace(*z, n)
    below_ = model.evaluate(t, zz, t, zz, side=-1)
    above_ = model.evaluate(t, zz, t, zz, side=1)
    scale = np.max(np.abs(below_[:, 1:3])) + np.max(np.abs(above_[:, 1:3]))
    e1 = np.max(np.abs(below_[:, 1] - np.exp(-1j * model.theta) * below_[:, 2]))
    e2 = np.max(np.abs(above_[:, 1] - np.exp(1j * model.theta) * above_[:, 2]))
    return float(max(e1, e2) / scale)


def oracle_errors(model, t_final: float, steps) -> list:
    window = model.initial.window
    out = []
    for dz in steps:
        r = zerorange.lattice_oracle(model, t_final, dz, window=window)
        out.append(float(np.max(np.abs(model.equal_time_slice(t_final, r.z1, r.z2) - r.psi))))
    return out


def current_configs(rng, n: int = 8, gap: float = 0.2) -> np.ndarray:
    """Spacelike configurations at least ``gap`` away from the light cone of each other."""
    out = []
    while len(out) < n:
        c = zerorange.random_spacelike_configs(rng, 4 * n, tmax=1.5, zmax=2.0)
        keep = np.abs(c[:, 1] - c[:, 3]) - np.abs(c[:, 0] - c[:, 2]) > gap
        out.extend(c[keep])
    return np.asarray(out[:n])


def current_residuals(model, configs, steps) -> np.ndarray:
    """``(len(steps), len(configs))`` divergence residuals relative to the local current."""
    res = np.zeros((len(steps), len(configs)))
    for i, c in enumerate(configs):
        peak = max(float(np.max(np.abs(model.tensor_current(*c)))), 1e-300)
        for k, h in enumerate(steps):
            res[k, i] = model.current_conservation_residual(*c, h) / peak
    return res


ZERORANGE_CHECKS = ("unitarity", "boundary", "oracle", "current", "covariance", "entanglement")


def run_zerorange(p: dict, tol: dict, rng: np.random.Generator) -> Run:
    model = zerorange.ZeroRangeModel(p["theta"], parse_initial(p["initial"]))
    run = Run(("quantity", "parameter", "value"))
    checks = p["check"]
    t_final = p["t_final"]
    if "unitarity" in checks:
        surfaces = dict(TEST_SURFACES, flat=Hypersurface.flat(t_final))
        if p.get("surface"):
            surfaces["user"] = Hypersurface.from_json(p["surface"])
        worst = 0.0
        for name in sorted(surfaces):
            n = model.surface_norm(surfaces[name])
            run.rows.append(("surface_norm", name, n))
            worst = max(worst, abs(n - 1))
        for t in np.linspace(0.0, t_final, 5):
            run.rows.append(("slice_norm", float(t), model.surface_norm(Hypersurface.flat(float(t)))))
        run.checks.append(below("unitarity", worst, tol["unitarity"], "max |norm - 1| over test surfaces"))
    if "boundary" in checks:
        err = boundary_error(model)
        run.rows.append(("boundary_relative_error", 50, err))
        run.checks.append(below("boundary_condition", err, tol["boundary"]))
    if "oracle" in checks:
        g = p["grid_dz"]
        steps = (4 * g, 2 * g, g)
        errs = oracle_errors(model, t_final, steps)
        for dz, e in zip(steps, errs):
            run.rows.append(("oracle_error", dz, e))
        run.checks.append(within("oracle_first_order", fitted_slope(steps, errs), 1.0, tol["slope_width_oracle"]))
    if "current" in checks:
        hs = (0.02, 0.01, 0.005)
        res = current_residuals(model, current_configs(rng), hs)
        for h, r in zip(hs, res.max(axis=1)):
            run.rows.append(("current_residual", h, float(r)))
        run.checks.append(below("current_conservation", float(res.max()), tol["current"],
                                "relative central-difference divergence"))
    if "covariance" in checks:
        cfg = zerorange.random_spacelike_configs(rng, 100)
        worst = 0.0
        for beta in (0.1, 0.3, 0.6):
            d = model.boost_covariance_check(beta, cfg)
            run.rows.append(("covariance_deviation", beta, d))
            worst = max(worst, d)
        run.checks.append(below("boost_covariance", worst, tol["covariance"]))
    if "entanglement" in checks:
        z = np.linspace(-4.0, 4.0, 400)
        for t in np.linspace(0.0, t_final, 5):
            run.rows.append(("purity", float(t), model.entanglement_purity(float(t), z)))
        apart = zerorange.ZeroRangeModel(p["theta"], zerorange.ProductData(*NON_CROSSING))
        run.checks.append(below("entanglement_crossing", model.entanglement_purity(t_final, z), tol["purity_drop"]))
        keep = 1 - apart.entanglement_purity(t_final, z)
        run.rows.append(("purity_loss_noncrossing", t_final, keep))
        run.checks.append(below("purity_noncrossing", keep, tol["purity_keep"], "1 - purity"))
    return run


# --------------------------------------------------------------------------
# consistency
# --------------------------------------------------------------------------

PROBE_CENTERS = [[0.1, -0.2, -0.5, 0.7], [0.3, 0.0, 1.0, -0.4], [-0.6, 0.4, 0.2, 2.1]]
COMMUTING = ("free", "single-particle")
NON_COMMUTING = ("pair-potential", "scalar-pair")


def run_consistency(p: dict, tol: dict, rng: np.random.Generator) -> Run:
    run = Run(("model", "base_config", "h", "residual"))
    name = p["model"]
    if name == "qft":
        rep = qft.statistics_consistency_experiment("y-bosonic", seed=int(rng.integers(2**31)))
        for i, r in enumerate(rep.residuals):
            run.rows.append((name, i, 0.0, r))
        if "commutator" in p["check"]:
            run.checks.append(below("qft_commutator", rep.max_residual, tol["statistics"]))
        return run
    hj, hk = consistency.FIXTURES[name]()
    probe = consistency.TestFunctionBundle.random(rng, 2, PROBE_CENTERS)
    t, z = probe.times, probe.positions
    scale = np.linalg.norm(probe(t, z), axis=-1)
    h0 = p["h"]
    maxima = []
    for h in (h0, h0 / 2, h0 / 4):
        per = np.linalg.norm(consistency.commutator_apply(hj, hk, probe, t, z, h), axis=-1) / scale
        maxima.append(float(per.max()))
        for i, r in enumerate(per):
            run.rows.append((name, i, h, float(r)))
    limit = maxima[2] + (maxima[2] - maxima[1]) / 15.0
    run.rows.append((name, "richardson", 0.0, limit))
    if "commutator" in p["check"]:
        if name in COMMUTING:
            run.checks.append(below("commutator_limit", abs(limit), tol["commuting"]))
        else:
            run.checks.append(above("commutator_limit", limit, tol["no_go"], "consistency must fail"))
    return run


# --------------------------------------------------------------------------
# qft and ts
# --------------------------------------------------------------------------

def _complex_pair(re: str, im: str) -> tuple:
    r = [float(v) for v in str(re).split(",")]
    i = [float(v) for v in str(im).split(",")]
    if len(r) != 2 or len(i) != 2:
        raise ValueError("g needs two spin components, e.g. --g-re 0.5,0.0")
    return (complex(r[0], i[0]), complex(r[1], i[1]))


def build_model(p: dict):
    lat = LatticeSpec(p["sites"], p["spacing"], p["boundary"] == "periodic")
    space = FockSpace(lat, m_max=p["mmax"], n_max=p["nmax"])
    coupling = CouplingSpec(_complex_pair(p["g_re"], p["g_im"]), p["mass_x"], p["mass_y"])
    cutoff = CutoffProfile.parse(p["cutoff"])
    return build_hamiltonian(space, coupling, cutoff, p["dispersion"]), cutoff


def parse_configs(spec: str, lattice: LatticeSpec, radius: float, rng) -> list:
    """``random:n`` equal-time (1,1) configurations outside the cutoff, or a JSON list of ``{x, y}``."""
    if spec.startswith("random:"):
        n = int(spec.split(":", 1)[1])
        out = []
        while len(out) < n:
            a, b = (int(v) for v in rng.integers(lattice.sites, size=2))
            if float(lattice.distance(a, b)) > radius:
                t = round(float(rng.uniform(0.0, 1.0)), 6)
                out.append(qft.Config(((t, a),), ((t, b),)))
        return out
    items = json.loads(spec)
    return [qft.Config(tuple(tuple(pt) for pt in it.get("x", [])), tuple(tuple(pt) for pt in it.get("y", [])))
            for it in items]


def _cfg_text(c: qft.Config) -> str:
    return json.dumps({"x": [list(v) for v in c.x], "y": [list(v) for v in c.y]}, sort_keys=True)


def run_qft(p: dict, tol: dict, rng: np.random.Generator) -> Run:
    ham, cutoff = build_model(p)
    space = ham.space
    run = Run(("check", "config", "step", "value"))
    checks = p["check"]
    state = random_state(space, rng)
    phi = qft.HeisenbergField(ham, state)
    if "equal-time" in checks:
        times = [float(t) for t in p["times"].split(",")]
        for t in times:
            run.rows.append(("equal-time", f"t={t}", 0.0, qft.equal_time_reduction_check(phi, [t])))
        err = max(r[3] for r in run.rows if r[0] == "equal-time")
        run.rows.append(("truncation-leak", "max", 0.0, qft.truncation_leak(ham, state, times)))
        run.checks.append(below("equal_time_reduction", err, tol["equal_time"]))
    configs = None
    if "equations" in checks or "splitting" in checks:
        radius = cutoff.support_radius(space.lattice)
        configs = parse_configs(p["configs"], space.lattice, radius, rng)
    if "equations" in checks:
        ops = qft.ModelOperators.from_hamiltonian(ham)
        steps = (p["dt"], p["dt"] / 2, p["dt"] / 4)
        slopes = []
        for c in configs:
            for which, count in (("x", c.m), ("y", c.n)):
                for idx in range(count):
                    res = [qft.multitime_equation_residual(phi, c, which, idx, h, ops) for h in steps]
                    for h, r in zip(steps, res):
                        run.rows.append(("equations", _cfg_text(c) + f" {which}{idx}", h, r))
                    slopes.append(fitted_slope(steps, res))
        worst = max(slopes, key=lambda s: abs(s - 2.0)) if slopes else 2.0
        run.checks.append(within("equations_second_order", worst, 2.0, tol["slope_width_equations"],
                                 "worst fitted slope over configurations"))
    if "splitting" in checks:
        worst = 0.0
        for c in configs:
            r = qft.splitting_equivalence_residual(phi, c)
            run.rows.append(("splitting", _cfg_text(c), 0.0, r))
            worst = max(worst, r)
        t, site = configs[0].x[0] if configs and configs[0].m else (0.3, 0)
        inside = qft.Config(((t, site),), ((t, site),))
        r_in = qft.splitting_equivalence_residual(phi, inside)
        run.rows.append(("splitting-inside-cutoff", _cfg_text(inside), 0.0, r_in))
        run.checks.append(Check("splitting_outside_cutoff", worst, 0.0, "<=", worst <= 0.0))
        run.checks.append(above("splitting_inside_cutoff", r_in, 0.0))
    if "statistics" in checks:
        g = _complex_pair(p["g_re"], p["g_im"])
        seed = int(rng.integers(2**31))
        for variant in qft.VARIANTS:
            rep = qft.statistics_consistency_experiment(variant, sites=p["stat_sites"], n_max=p["nmax"],
                                                        g=g, seed=seed)
            run.rows.append(("statistics", variant, 0.0, rep.max_residual))
            witness = _cfg_text(rep.witness) if rep.witness else ""
            if variant == "y-fermionic":
                run.checks.append(above(f"statistics_{variant}_fails", rep.max_residual,
                                        10 * tol["statistics"], "witness " + witness))
            else:
                run.checks.append(below(f"statistics_{variant}", rep.max_residual, tol["statistics"]))
    return run


def _surfaces(p: dict, lattice: LatticeSpec) -> list:
    if p["path"]:
        raw = json.loads(p["path"])
    else:
        raw = [[0.5 + 0.02 * i for i in range(lattice.sites)]]
    return [tomonaga.DiscreteHypersurface(tuple(s), lattice.spacing, lattice.periodic) for s in raw]


def _legs(surfaces, start, dt: float) -> list:
    path, cur = [], start
    for s in surfaces:
        span = float(np.max(np.abs(np.subtract(s.times, cur.times))))
        sweeps = max(1, int(math.ceil(span / dt - 1e-9)))
        path += tomonaga.sweep_path(cur, s, sweeps)
        cur = s
    return path


def run_ts(p: dict, tol: dict, rng: np.random.Generator) -> Run:
    ham, _ = build_model(p)
    space = ham.space
    lat = space.lattice
    run = Run(("quantity", "parameter", "value"))
    checks = p["check"]
    state = random_state(space, rng, sectors=[(m, n) for m in range(space.m_max + 1) for n in range(space.n_max)])
    ip = tomonaga.InteractionPicture(ham)
    start = tomonaga.DiscreteHypersurface.flat(lat.sites, 0.0, lat.spacing, lat.periodic)
    surfaces = _surfaces(p, lat)
    sectors = [(m, n) for m in range(space.m_max + 1) for n in range(space.n_max + 1)]
    devs = []
    if "multitime" in checks and p["compare_multitime"]:
        phi = qft.HeisenbergField(ham, state)
        steps = (p["dt"], p["dt"] / 2, p["dt"] / 4)
        for dt in steps:
            path = _legs(surfaces, start, dt)
            d = tomonaga.ts_vs_multitime(ham, state, path, sectors, p["scheme"], phi, ip)
            devs.append(d)
            run.rows.append(("ts_deviation", dt, d))
            run.rows.append(("path_steps", dt, len(path)))
        target = 1.0 if p["scheme"] == "euler" else 2.0
        run.checks.append(within("ts_equivalence_order", fitted_slope(steps, devs), target, tol["slope_width_ts"]))
    if "composition" in checks:
        end = surfaces[-1]
        # mirrored tilt, so the intermediate surface is off the straight route
        middle = tomonaga.DiscreteHypersurface(tuple(0.5 * t for t in end.times[::-1]), lat.spacing, lat.periodic)
        span = float(np.max(np.abs(np.asarray(end.times))))
        sweeps = max(1, int(math.ceil(0.5 * span / p["dt"] - 1e-9)))
        d = tomonaga.composition_defect(ip, state, start, middle, end, sweeps, p["scheme"])
        run.rows.append(("composition_defect", p["dt"], d))
        budget = devs[0] if devs else tomonaga.ts_vs_multitime(ham, state, _legs([end], start, p["dt"]),
                                                               sectors, p["scheme"], ip=ip)
        run.rows.append(("composition_budget", p["dt"], budget))
        run.checks.append(below("composition_law", d, budget, "budget: path deviation at the same step"))
    if "commutators" in checks:
        worst = 0.0
        for dt in (0.0, 0.5):
            floor = tomonaga.hi_tail_floor(ham, max(dt, 0.5))
            for d in range(1, lat.sites // 2 + 1):
                if dt >= d * lat.spacing:
                    continue
                c = tomonaga.hi_commutator_norm(ip, (0.3, 0), (0.3 + dt, d))
                run.rows.append((f"hi_commutator_dt{dt}", d, c))
                run.rows.append((f"hi_floor_dt{dt}", d, float(floor(d))))
                worst = max(worst, c / float(floor(d)))
        run.checks.append(below("hi_commutators_below_tail", worst, 1.0, "max ratio to the fitted floor"))
    return run


# --------------------------------------------------------------------------
# born
# --------------------------------------------------------------------------

def run_born(p: dict, tol: dict, rng: np.random.Generator) -> Run:
    run = Run(("eps", "tv_distance", "total_probability", "mutual_information"))
    dyn = p["dynamics"]
    make = {"free1": born.free1_scenario, "bloch2": born.bloch_scenario, "zerorange": born.zerorange_scenario}[dyn]
    sc = make()
    if p.get("surface"):
        sc = born.Scenario(sc.name, Hypersurface.from_json(p["surface"]), sc.grid, sc.edges)
    eps = [p["eps"] / 2**k for k in range(p["refinements"])]
    results = [born.SCENARIOS[dyn](e, sc) for e in eps]
    for r in results:
        run.rows.append((r.eps, r.tv, r.total_probability, r.mutual_information))
    checks = p["check"]
    if "coverage" in checks:
        misses = sum(born.audit_coverage(born.build_schedule(sc.surface, e, sc.grid), seed=int(rng.integers(2**31)))
                     for e in eps)
        run.checks.append(Check("coverage_misses", misses, 0, "<=", misses == 0))
    if "probability" in checks:
        run.checks.append(below("total_probability", max(abs(r.total_probability - 1) for r in results),
                                tol["probability"]))
    if "convergence" in checks:
        tvs = [r.tv for r in results]
        if dyn == "free1":
            ratio = max(b / a for a, b in zip(tvs, tvs[1:])) if len(tvs) > 1 else 0.0
            run.checks.append(below("monotone_refinement", ratio, 1.0, "max TV(eps/2)/TV(eps)"))
            run.checks.append(below("finest_tv", tvs[-1], tol["free1_tv"]))
        else:
            run.checks.append(below("finest_tv", tvs[-1], tol["pair_tv"]))
    if "factorization" in checks and dyn == "bloch2":
        run.checks.append(below("mutual_information", results[-1].mutual_information, tol["mutual_information"]))
    return run


RUNNERS = {"zerorange": run_zerorange, "consistency": run_consistency, "qft": run_qft,
           "ts": run_ts, "born": run_born}
