"""Monte Carlo finite-difference reference solutions.

The 1D diffusion problem is solved with implicit Euler in time and a
conservative three-point flux in space; the 2D heat problems with a
five-point variable-coefficient stencil solved by Jacobi-preconditioned
conjugate gradients. Nodes inside the hole are pinned to zero.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded
from scipy.sparse.linalg import cg

from .errors import NumericFault, UsageError
from .models import STREAM_ORACLE
from .problems import ProblemSpec, RandomFieldSpec, diffusion_initial_condition, heat_forcing
from .sampler import sample_params, stream_rng

logger = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-10
CG_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Grid1D:
    nx: int
    nt: int
    horizon: float

    def __post_init__(self):
        if self.nx < 3:
            raise UsageError(f"1D grid needs at least 3 nodes, got {self.nx}")
        if self.nt < 1:
            raise UsageError(f"1D grid needs at least one time step, got {self.nt}")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nx)

    @property
    def h(self) -> float:
        return 1.0 / (self.nx - 1)

    @property
    def dt(self) -> float:
        return self.horizon / self.nt

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.nt + 1)


@dataclass(frozen=True)
class Grid2D:
    """Node grid on [-1, 1]^2 with `cells` cells per side."""

    cells: int
    hole_radius: float = 0.0

    def __post_init__(self):
        if self.cells < 2:
            raise UsageError(f"2D grid needs at least 2 cells per side, got {self.cells}")

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.cells + 1)

    @property
    def h(self) -> float:
        return 2.0 / self.cells

    def mesh(self):
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    @property
    def pinned(self) -> np.ndarray:
        """Dirichlet nodes: the outer boundary and every node within the hole."""
        x, y = self.mesh()
        mask = np.zeros(x.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        if self.hole_radius > 0:
            mask |= x * x + y * y <= self.hole_radius**2
        return mask


@dataclass(frozen=True)
class Resolution:
    nx: int = 201
    nt: int = 200
    cells: int = 128


@dataclass
class EnsembleRun:
    """M oracle solves; `values` holds (M, n_probes) probe values when probes were given."""

    seed: int
    params: np.ndarray
    probes: Optional[np.ndarray]
    values: Optional[np.ndarray] = None
    solutions: Optional[List[np.ndarray]] = None

    @property
    def size(self) -> int:
        return len(self.params)


def _banded_residual(ab: np.ndarray, u: np.ndarray, rhs: np.ndarray) -> float:
    product = ab[1] * u
    product[:-1] += ab[0, 1:] * u[1:]
    product[1:] += ab[2, :-1] * u[:-1]
    scale = max(np.linalg.norm(rhs), 1.0)
    return float(np.linalg.norm(product - rhs) / scale)


def fd_diffusion_1d(
    field: RandomFieldSpec,
    p: np.ndarray,
    c: float,
    nx: int,
    nt: int,
    T: float,
    initial: Callable[[np.ndarray], np.ndarray] = diffusion_initial_condition,
) -> np.ndarray:
    """Solution on the (nt + 1) x nx space-time grid, u = 0 at both ends."""
    grid = Grid1D(nx, nt, T)
    x, h, dt = grid.x, grid.h, grid.dt
    midpoints = 0.5 * (x[:-1] + x[1:])
    a_mid, _ = field.evaluate(np.column_stack([np.zeros_like(midpoints), midpoints]), np.asarray(p))
    if np.any(a_mid <= 0):
        raise NumericFault("diffusion coefficient is not positive on the grid")

    west, east = a_mid[:-1] / h**2, a_mid[1:] / h**2
    n = nx - 2
    ab = np.zeros((3, n))
    ab[0, 1:] = -east[:-1]
    ab[1] = 1.0 / dt + west + east
    ab[2, :-1] = -west[1:]

    u = np.zeros((nt + 1, nx))
    u[0] = initial(x)
    u[0, 0] = u[0, -1] = 0.0
    for step in range(1, nt + 1):
        rhs = u[step - 1, 1:-1] / dt + c
        try:
            interior = solve_banded((1, 1), ab, rhs)
        except np.linalg.LinAlgError as error:
            raise NumericFault(f"singular tridiagonal system at step {step}") from error
        if _banded_residual(ab, interior, rhs) > RESIDUAL_TOLERANCE:
            raise NumericFault(f"tridiagonal solve residual too large at step {step}")
        u[step, 1:-1] = interior
    return u


def _assemble_poisson(k: np.ndarray, pinned: np.ndarray, h: float):
    """Five-point matrix over the free nodes, arithmetic face averages of k."""
    index = -np.ones(k.shape, dtype=int)
    free = ~pinned
    index[free] = np.arange(int(free.sum()))
    rows, cols, vals = [], [], []
    diagonal = np.zeros(int(free.sum()))
    fi, fj = np.nonzero(free)
    me = index[fi, fj]
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni, nj = fi + di, fj + dj
        face = 0.5 * (k[fi, fj] + k[ni, nj]) / h**2
        diagonal += face
        neighbour = index[ni, nj]
        coupled = neighbour >= 0
        rows.append(me[coupled])
        cols.append(neighbour[coupled])
        vals.append(-face[coupled])
    rows.append(me)
    cols.append(me)
    vals.append(diagonal)
    n = len(diagonal)
    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return matrix, diagonal


def fd_poisson_2d(
    field: RandomFieldSpec,
    p: np.ndarray,
    forcing: Callable[[np.ndarray, np.ndarray], np.ndarray],
    grid: Grid2D,
) -> np.ndarray:
    """Nodal solution of -div(k grad u) = f with u = 0 on every pinned node."""
    x, y = grid.mesh()
    k, _ = field.evaluate(np.column_stack([x.ravel(), y.ravel()]), np.asarray(p))
    k = k.reshape(x.shape)
    pinned = grid.pinned
    u = np.zeros(x.shape)
    f = np.broadcast_to(forcing(x, y), x.shape)
    rhs = f[~pinned].astype(np.float64)
    if not np.any(rhs):
        return u

    matrix, diagonal = _assemble_poisson(k, pinned, grid.h)
    preconditioner = sp.diags(1.0 / diagonal)
    solution, info = cg(matrix, rhs, rtol=CG_TOLERANCE, atol=0.0, M=preconditioner, maxiter=20 * len(rhs))
    if info != 0:
        raise NumericFault(f"conjugate gradient did not converge (info={info})")
    residual = np.linalg.norm(matrix @ solution - rhs) / np.linalg.norm(rhs)
    if residual > RESIDUAL_TOLERANCE:
        raise NumericFault(f"Poisson solve residual {residual:.3e} above tolerance")
    u[~pinned] = solution
    return u


def _solve_member(problem: ProblemSpec, p: np.ndarray, resolution: Resolution):
    """Grid axes and nodal solution of one ensemble member."""
    if problem.pde == "diffusion":
        grid = Grid1D(resolution.nx, resolution.nt, problem.domain.horizon)
        u = fd_diffusion_1d(problem.field, p, problem.source, grid.nx, grid.nt, grid.horizon)
        return (grid.times, grid.x), u
    grid = Grid2D(resolution.cells, problem.domain.hole_radius)
    u = fd_poisson_2d(problem.field, p, lambda x, y: heat_forcing(x, y, problem.tag), grid)
    return (grid.axis, grid.axis), u


def member_params(problem: ProblemSpec, seed: int, member: int) -> np.ndarray:
    rng = stream_rng(seed, STREAM_ORACLE, member)
    return sample_params(1, problem.d, "uniform01", rng)[0]


def mc_ensemble(
    problem: ProblemSpec,
    M: int,
    resolution: Resolution = Resolution(),
    seed: int = 0,
    probes: Optional[np.ndarray] = None,
    workers: int = 1,
) -> EnsembleRun:
    """M independent oracle solves, member m drawn from counter m of the oracle stream.

    With `probes` each member keeps only its values interpolated at the
    probes; without, the full nodal solutions are kept.
    """
    if M < 1:
        raise UsageError(f"ensemble needs at least one member, got {M}")
    params = np.array([member_params(problem, seed, m) for m in range(M)]).reshape(M, problem.d)

    def solve(member: int):
        try:
            axes, u = _solve_member(problem, params[member], resolution)
        except NumericFault as error:
            raise NumericFault(f"ensemble member {member} failed: {error}", sample=f"member {member}") from error
        if (member + 1) % 100 == 0:
            logger.info("oracle member %d/%d solved", member + 1, M)
        if probes is None:
            return u
        return RegularGridInterpolator(axes, u)(np.atleast_2d(probes))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve, range(M)))
    else:
        results = [solve(member) for member in range(M)]

    if probes is None:
        return EnsembleRun(seed, params, None, solutions=results)
    return EnsembleRun(seed, params, np.atleast_2d(probes), values=np.vstack(results))
