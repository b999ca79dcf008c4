"""Names of the RMLSA decision variables.

``x_i_j`` marks arc (i, j) as part of the route, ``x_i_j_k_m`` marks slot k
of that arc as used with modulation m, and ``z_i_j_k_m`` marks slot k as the
first slot of the block.
"""

from __future__ import annotations


def x_link(i: int, j: int) -> str:
    return f"x_{i}_{j}"


def x_slot(i: int, j: int, k: int, m: int) -> str:
    return f"x_{i}_{j}_{k}_{m}"


def z_start(i: int, j: int, k: int, m: int) -> str:
    return f"z_{i}_{j}_{k}_{m}"


def y_path(p: int) -> str:
    return f"y_{p}"


def noise(k: int) -> str:
    return f"q_{k}"


def variable_count(num_arcs: int, N: int, M: int) -> int:
    return num_arcs * (1 + 2 * N * M)
