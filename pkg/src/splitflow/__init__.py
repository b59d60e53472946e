"""splitflow: splitting types on the two-sphere by energy flow and Toeplitz ranks.

Subpackages follow the pipeline: ``liegroup`` (unitary/Lie-algebra primitives),
``loopspace`` (discrete loops, energy, Hessian, geodesics), ``flow`` (gradient
descent to critical loops), ``birkhoff`` (flow-free Toeplitz splitting oracle),
``bundle`` (two-chart connections on S^2), ``invariants`` (families over
parameter spheres and energy invariants), ``cascade`` (Morse-Bott cascade
complexes), ``cli`` (experiment runner).
"""

__version__ = "0.1.0"
