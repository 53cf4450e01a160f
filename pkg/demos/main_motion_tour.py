"""A short tour: zero main motion in O1, paired non-zero main motions in O4.

Run with ``python demos/main_motion_tour.py``; takes about half a minute.
"""
from precess.bifurcation import kov_classify_c0
from precess.dynamics import KOVALEVSKAYA
from precess.levelset import TargetIntegrals, torus_clusters
from precess.precession import lambda_converged


def report(h, k_sq):
    target = TargetIntegrals(KOVALEVSKAYA, h, k_sq)
    print(f"h={h}, k^2={k_sq}: {kov_classify_c0(h, k_sq).region.value}")
    for tid, rep in enumerate(torus_clusters(target, n_seeds=16, horizon=600.0).representatives()):
        est = lambda_converged(KOVALEVSKAYA, rep)
        flag = "" if est.converged else " (not converged)"
        print(f"  torus {tid}: lambda = {est.lam:+.6f} at T = {est.horizon:.0f}{flag}")


if __name__ == "__main__":
    report(0.5, 0.5)   # one torus, the axis oscillates about a fixed azimuth
    report(1.0, 1.5)   # two tori, the axis circulates in opposite senses
