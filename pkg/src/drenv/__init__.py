"""Douglas-Rachford splitting, its envelope, and ADMM for nonconvex problems.

The package evaluates the Douglas-Rachford envelope as an exact merit
function, certifies stepsize and relaxation ranges with explicit
sufficient-decrease constants, runs DRS/PRS/ADMM (plain and adaptive),
and ships a testbed of fixtures that converge inside the certified
ranges and stall outside them.
"""

__version__ = "0.1.0"
