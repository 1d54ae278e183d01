# Stationary-output 1-D convolution, from recurrences to lane code.
import numpy as np

from sysc import gallery
from sysc.emitter import emit
from sysc.ir import compile_design, dump
from sysc.simulator import simulate
from sysc.ure import direct_eval, infer_dependences

design = gallery.instantiate("sbm1d", {"Q": 3, "CCC": 4, "CC": 1})
print(gallery.source("sbm1d"))

# uniform dependences, consumer minus producer over (q, c)
for d in infer_dependences(design.system):
    print(d)

# every intermediate nest of the pass pipeline
compiled = compile_design(design)
for snap in compiled.snapshots:
    print(f"--- after {snap.name}")
    print(dump(snap.nest))

# vectorized pseudocode of the final nest
print(emit(compiled.nest).text)

x = np.arange(1, 7)
w = np.array([1, 0, -1])
out, trace = simulate(compiled.nest, {"x": x, "w": w}, trace=True)
print(out)                                     # [-2 -2 -2 -2]
print(direct_eval(design.system, {"x": x, "w": w}))
print(np.correlate(x, w, mode="valid"))

# lane contents per time step; _ marks lanes that hold nothing yet
print(trace.dump(["X", "Z"]))
