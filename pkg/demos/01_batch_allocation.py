"""
Splitting a global batch across uneven workers
==============================================

Each worker's local batch decides how long its step takes. With a fixed
global batch, the fastest step finishes when the slowest worker does, so
the split should equalize finish times as far as integers allow.
"""

from antdt.solver import BatchProblem, DeviceClassSpec, GradAccumProblem, solve_batch, solve_grad_accum

# %%
# Four workers, one of them a third as fast as the rest.
speeds = [300.0, 300.0, 300.0, 100.0]
sol = solve_batch(BatchProblem(1000, speeds))
for w, b, _ in sol.allocation.per_worker:
    print(f"worker {w}: batch {b:4d}  step {b / speeds[w]:.3f} s")
print(f"slowest step {sol.objective_z:.3f} s versus {250 / 100:.3f} s for an even split")

# %%
# Rounding matters for small batches: the best integer split is not always
# the rounded continuous one, so the solver searches the neighbourhood.
print(solve_batch(BatchProblem(10, [1.0, 2.0])).allocation.per_worker)

# %%
# On dedicated GPUs memory caps the micro-batch, and gradient accumulation
# lets a fast device contribute several micro-batches per step.
classes = [DeviceClassSpec(4, 420.0, 16, 128), DeviceClassSpec(4, 140.0, 16, 128)]
acc = solve_grad_accum(GradAccumProblem(768, classes, c_min=1, c_max=5))
for spec, (b, c) in zip(classes, acc.per_class):
    print(f"{spec.count} devices at {spec.speed:.0f}/s: micro-batch {b}, accumulate {c}, step {c * b / spec.speed:.3f} s")
