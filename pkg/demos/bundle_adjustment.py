"""Bundle adjustment: recover a perturbed scene, then time growing problem sizes.

    python demos/bundle_adjustment.py
"""

from marsnav.reconstruction import (LMConfig, ba_benchmark, ba_solve, gauge_aligned_error,
                                    make_scene, perturb_problem)


def main():
    truth = make_scene(10, 100, seed=0)
    start = perturb_problem(truth, seed=1)
    sol = ba_solve(start)
    print(f"10 cameras / 100 landmarks, noiseless: {sol.iterations} iterations, "
          f"cost {sol.cost_trace[0]:.3g} -> {sol.final_cost:.3g}, "
          f"error after alignment {gauge_aligned_error(sol, truth):.2e}")

    print("\ncameras  landmarks  observations  iterations  time [s]  final cost")
    sizes = [(5, 50), (10, 200), (20, 500), (40, 1000, 8000)]
    for r in ba_benchmark(sizes, LMConfig(), noise_sigma=0.5):
        print(f"{r['cameras']:7d}  {r['landmarks']:9d}  {r['observations']:12d}  "
              f"{r['iterations']:10d}  {r['wall_time']:8.3f}  {r['final_cost']:10.4g}")


if __name__ == "__main__":
    main()
