# 2-D convolution with two projections folded into one transform.
import numpy as np
from scipy.signal import correlate2d

from sysc import gallery
from sysc.ir import compile_design
from sysc.perf import analyze
from sysc.simulator import simulate
from sysc.transform import ProjectionStep, compose_projections

P = 3
steps = [ProjectionStep((0, 1, 0), ((1, 0, 0), (0, 0, 1)), (0, 1, 0)),
         ProjectionStep((-1, 1), ((1, 1),), (0, P))]
t = compose_projections(steps)
print("allocation", t.allocation, "schedule", t.schedule)      # (1 0 1), (0 1 P)

for key in gallery.TWO_D:
    d = gallery.instantiate(key, {"Q": P, "P": P})
    nest = compile_design(d).nest
    rng = np.random.default_rng(0)
    x = rng.integers(-9, 10, size=(64 + P - 1, 4 + P - 1))
    w = rng.integers(-9, 10, size=(P, P))
    out = simulate(nest, {"x": x, "w": w})
    print(key, np.array_equal(out, correlate2d(x, w, mode="valid")))
    print(analyze(nest).to_text())
