"""
acceptance.py
─────────────
Full-scale physics checks: population transfer, boundary values of the
steering witnesses, asymmetric steering for Fock input, the coherent null
result, frozen-state values, exact small-N equivalence, sampler moments
and numerical hygiene. Runs take minutes on a multicore machine.

USAGE:
    python scripts/acceptance.py --workers 8
    python scripts/acceptance.py --workers 8 --scale 0.1 --only 1,2,5
"""

import argparse
import math
import os
import sys
import tempfile
import time

import numpy as np
from dotenv import load_dotenv

# Resolve project root so ctapsteer package is importable regardless of CWD
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from ctapsteer.simulation.model import ModelParams, Scheme, SimParams, StateKind, sample_grid
from ctapsteer.simulation.observables import frozen_state_moments, frozen_state_xi, hz_entanglement, total_number, xi_pair
from ctapsteer.simulation.oracle import OracleParams, run_oracle
from ctapsteer.simulation.phasespace import RngStream, sample_fock, sample_gamma
from ctapsteer.simulation.results import agreement_report, rows_from_series, write_csv
from ctapsteer.simulation.sde import compare_series, run_ensemble

load_dotenv()


class Acceptance:

    def __init__(self, workers: int, scale: float):
        self.workers = workers
        self.scale   = scale
        self.results = []
        self._cache  = {}

    def _traj(self, n: int, batches: int = 100) -> int:
        return max(batches, int(round(n * self.scale / batches)) * batches)

    def record(self, number: int, name: str, passed: bool, detail: str):
        self.results.append((number, name, passed, detail))
        print(f"  {'✓' if passed else '✗'} {detail}")

    def ensemble(self, kind: StateKind):
        """Default-parameter ensemble for one input state, shared by several checks."""
        if kind not in self._cache:
            p = ModelParams(state_kind=kind)
            s = SimParams(n_traj=self._traj(55_000))
            print(f"      → running {s.n_traj:,} {kind.value} trajectories...")
            self._cache[kind] = (p, s, run_ensemble(p, s, workers=self.workers))
        return self._cache[kind]

    # ── CHECKS ────────────────────────────────────────────────────────────────

    def population_transfer(self):
        p, _, coherent = self.ensemble(StateKind.COHERENT)
        series = coherent.series()
        n = p.n_total

        self.record(1, "transfer", series.n3[-1] >= 0.95 * n, f"N3(t_p) = {series.n3[-1]:.2f} (≥ {0.95 * n:.0f})")
        self.record(1, "transfer", series.n2.max() <= 0.10 * n, f"max N2 = {series.n2.max():.2f} (≤ {0.10 * n:.0f})")

        total = total_number(coherent.moments)
        worst = np.max(np.abs(total.value - total.value[0]) / np.maximum(np.hypot(total.error, total.error[0]), 1e-300))
        self.record(1, "transfer", worst <= 3, f"total number constant: worst {worst:.2f}σ")

        fock  = self.ensemble(StateKind.FOCK)[2].series()
        ratio = max(compare_series(series, fock)[name] for name in ("n1", "n2", "n3"))
        self.record(1, "transfer", ratio <= 3, f"Fock vs coherent populations: worst {ratio:.2f}σ")

    def boundary_values(self):
        _, _, coherent = self.ensemble(StateKind.COHERENT)
        xi13, xi31 = xi_pair(coherent.moments)
        exact = math.isclose(xi13.value[0], -100.0, rel_tol=1e-12) and xi31.value[0] == 0 and xi13.error[0] <= 1e-9
        self.record(2, "boundary", exact, f"coherent ξ13(0) = {xi13.value[0]:.12g}, ξ31(0) = {xi31.value[0]:g}")

        _, _, fock = self.ensemble(StateKind.FOCK)
        xi13, xi31 = xi_pair(fock.moments)
        ok = abs(xi13.value[0] + 100.0) <= 3 * xi13.error[0] and xi31.value[0] == 0
        self.record(2, "boundary", ok, f"Fock ξ13(0) = {xi13.value[0]:.3f} ± {xi13.error[0]:.3f}")

    def asymmetric_steering(self):
        p, _, fock = self.ensemble(StateKind.FOCK)
        xi13, xi31 = xi_pair(fock.moments)
        times      = fock.moments.times
        pos13      = xi13.value > 3 * xi13.error
        pos31      = xi31.value > 3 * xi31.error
        early      = times < p.t_p / 2
        late       = times > p.t_p / 2

        only13_early = np.any(pos13 & ~pos31 & early)
        only31_early = np.any(pos31 & ~pos13 & early)
        only13_late  = np.any(pos13 & ~pos31 & late)
        only31_late  = np.any(pos31 & ~pos13 & late)
        structured   = (only13_early and only31_late) or (only31_early and only13_late)

        self.record(3, "steering", structured, "one-way steering before and after t_p/2 in opposite directions")
        self.record(3, "steering", not np.any(pos13 & pos31), "never both ξ > 3σ")

        hz       = hz_entanglement(fock.moments)
        steering = pos13 | pos31
        self.record(3, "steering", bool(np.all(hz.value[steering] < 0)), "E_HZ < 0 wherever a ξ exceeds 3σ")

        middle = int(np.argmin(np.abs(times - p.t_p / 2)))
        self.record(
            3, "steering", hz.value[middle] < -3 * hz.error[middle],
            f"E_HZ(t = {times[middle]:g}) = {hz.value[middle]:.2f} ± {hz.error[middle]:.2f}",
        )

    def coherent_null(self):
        _, _, coherent = self.ensemble(StateKind.COHERENT)
        series = coherent.series()
        ok_xi  = np.all(series.xi13 <= 3 * series.xi13_err) and np.all(series.xi31 <= 3 * series.xi31_err)
        ok_hz  = np.all(series.hz >= -3 * series.hz_err)
        self.record(4, "coherent null", ok_xi, f"max ξ13 = {series.xi13.max():.3f}, max ξ31 = {series.xi31.max():.3f}")
        self.record(4, "coherent null", ok_hz, f"min E_HZ = {series.hz.min():.3f}")

    def frozen_state(self):
        self.record(5, "frozen", frozen_state_xi(StateKind.COHERENT, 200) == -50, "coherent analytic ξ = −50")
        self.record(5, "frozen", frozen_state_xi(StateKind.FOCK, 200) == -10050, "Fock analytic ξ = −10050")
        samples = self._traj(1_000_000)
        for kind in (StateKind.COHERENT, StateKind.FOCK):
            expected   = frozen_state_xi(kind, 200)
            xi13, xi31 = xi_pair(frozen_state_moments(kind, 200, samples))
            ok = all(abs(e.value[0] - expected) <= max(3 * e.error[0], 1e-9) for e in (xi13, xi31))
            self.record(5, "frozen", ok, f"{kind.value} Monte Carlo ξ13 = {xi13.value[0]:.2f} ± {xi13.error[0]:.2f}")

    def oracle_equivalence(self):
        for n in (2, 4, 8):
            p = ModelParams(n_total=n, state_kind=StateKind.FOCK)
            s = SimParams(n_traj=self._traj(100_000), n_samples=20)
            stochastic = run_ensemble(p, s, workers=self.workers).series()
            exact      = run_oracle(p, sample_grid(p, s).times, workers=self.workers)
            rows       = agreement_report(stochastic, exact, sigma=4.0)
            failed     = sum(not row.passed for row in rows)
            self.record(6, "oracle", failed == 0, f"N = {n}: {len(rows) - failed}/{len(rows)} within 4σ")

        # Noiseless limit: coherent input, no interactions
        p = ModelParams(n_total=1, chi=0.0)
        s = SimParams(dt=1e-3, n_traj=2, n_batches=2, n_samples=20, scheme=Scheme.RK4)
        stochastic = run_ensemble(p, s).series()
        exact      = run_oracle(p, sample_grid(p, s).times, OracleParams(tail_mass=1e-12), workers=self.workers)
        worst = max(np.max(np.abs(getattr(stochastic, name) - getattr(exact, name))) for name in ("n1", "n2", "n3", "xi13", "xi31", "hz"))
        self.record(6, "oracle", worst <= 1e-6, f"χ = 0 worst difference {worst:.2e}")

    def sampler_moments(self):
        draws = self._traj(1_000_000)
        for n in (0, 5, 200):
            z  = sample_gamma(n, RngStream(17, n), size=draws)
            ok = abs(z.mean() - (n + 1)) <= 4 * math.sqrt((n + 1) / draws)
            ok = ok and abs(z.var() - (n + 1)) <= 4 * math.sqrt((2 + 6 / (n + 1)) * (n + 1) ** 2 / draws)
            self.record(7, "samplers", ok, f"Gamma({n + 1}) mean {z.mean():.3f} var {z.var():.3f}")

        for n in (5, 200):
            a, ap = sample_fock(n, RngStream(19, n), size=draws)
            checks = (((ap * a).real, n), ((ap ** 2 * a ** 2).real, n * (n - 1)), (a.real, 0.0), (a.imag, 0.0))
            ok = all(abs(v.mean() - target) <= 4 * v.std() / math.sqrt(v.size) for v, target in checks)
            self.record(7, "samplers", ok, f"Fock({n}) normally ordered moments")

    def hygiene(self):
        p, s, coherent = self.ensemble(StateKind.COHERENT)
        fraction = coherent.divergence.fraction
        self.record(8, "hygiene", fraction < 1e-3, f"diverged fraction {fraction:.4%}")

        half  = run_ensemble(p, s.model_copy(update={"dt": s.dt / 2}), workers=self.workers).series()
        worst = compare_series(coherent.series(), half)
        name  = max(worst, key=worst.get)
        self.record(8, "hygiene", worst[name] <= 3, f"dt/2 worst change {worst[name]:.2f}σ ({name})")

        small = SimParams(n_traj=1000, n_batches=10, dt=0.01, n_samples=5)
        tiny  = ModelParams(t_p=4.0, state_kind=StateKind.FOCK)
        with tempfile.TemporaryDirectory() as tmp:
            paths = []
            for workers in (1, max(self.workers, 2)):
                series = run_ensemble(tiny, small, workers=workers).series()
                paths.append(write_csv(rows_from_series(series), os.path.join(tmp, f"w{workers}.csv")))
            with open(paths[0], "rb") as a, open(paths[1], "rb") as b:
                self.record(8, "hygiene", a.read() == b.read(), "byte-identical output across worker counts")


CHECKS = {
    1: ("Population transfer",          Acceptance.population_transfer),
    2: ("Boundary values of ξ",         Acceptance.boundary_values),
    3: ("Asymmetric steering (Fock)",   Acceptance.asymmetric_steering),
    4: ("Null result (coherent)",       Acceptance.coherent_null),
    5: ("Frozen-state values",          Acceptance.frozen_state),
    6: ("Exact small-N equivalence",    Acceptance.oracle_equivalence),
    7: ("Sampler moments",              Acceptance.sampler_moments),
    8: ("Numerical hygiene",            Acceptance.hygiene),
}


def main():
    parser = argparse.ArgumentParser(description="ctapsteer acceptance checks")
    parser.add_argument("--workers", type=int, default=int(os.environ.get("CTAPSTEER_WORKERS", "1")))
    parser.add_argument("--scale",   type=float, default=1.0, help="multiply every ensemble size")
    parser.add_argument("--only",    default="", help="comma-separated check numbers")
    args = parser.parse_args()

    wanted = [int(x) for x in args.only.split(",") if x.strip()] or list(CHECKS)
    suite  = Acceptance(workers=args.workers, scale=args.scale)
    start  = time.time()

    for i, number in enumerate(wanted, 1):
        title, check = CHECKS[number]
        print(f"\n[{i}/{len(wanted)}] {number}. {title}")
        check(suite)

    passed = sum(1 for *_, ok, _ in suite.results if ok)
    print(f"\n{'─' * 50}")
    print(f"{passed}/{len(suite.results)} checks passed in {time.time() - start:.0f}s")
    sys.exit(0 if passed == len(suite.results) else 1)


if __name__ == "__main__":
    main()
