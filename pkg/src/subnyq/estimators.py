"""Joint DOA/frequency estimation pipelines and their shared primitives.

Two pipelines operate on the simplified receiver output W:

* `jdfpi`: individual estimates (spatial MUSIC on the sensor view Q, coset
  support recovery on the branch view Y1) matched by cross-correlation
  pairing, then least-squares signal reconstruction and per-source residual
  frequency estimation.
* `jdfsdpj`: a joint 2-D subspace search over (spatial phase, band) with the
  simplified steering vectors, which needs no pairing step.

`jdfsd_full` is the full-structure (all M*P channels) baseline of the same
subspace search, used for comparison only.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (
    ConfigError,
    EmptySupportError,
    EstimationError,
    PeakCountError,
    RankDeficiencyError,
    SpatialAliasingError,
)
from .model import (
    build_A,
    build_B,
    build_G_selected,
    build_H_selected,
    doa_from_phase,
    full_steering,
    joint_steering,
    spatial_steering,
)

__all__ = [
    "SubspaceDecomposition",
    "JointSupport",
    "EstimationResult",
    "sample_covariance",
    "decompose",
    "default_phase_grid",
    "music_spatial",
    "ls_solve",
    "ctf_support",
    "pair_supports",
    "residual_frequency",
    "unfold_frequency",
    "jdfpi",
    "jdfsdpj",
    "jdfsd_full",
]

COND_LIMIT = 1e10
CTF_RESIDUAL_TOL = 1e-8
PAIRING_AMBIGUITY_RATIO = 3.0
NMS_RADIUS = 3  # grid cells suppressed around an accepted 2-D peak


@dataclass(frozen=True)
class SubspaceDecomposition:
    """Eigendecomposition of a sample covariance split at model order K."""

    R: np.ndarray = field(repr=False)
    eigvals: np.ndarray
    U_S: np.ndarray = field(repr=False)
    U_N: np.ndarray = field(repr=False)
    weak_separation: bool = False


@dataclass(frozen=True)
class JointSupport:
    """Per-source band assignment; `flat[i] = i*L + bands[i]` indexes H's columns."""

    bands: tuple[int, ...]
    L: int
    ambiguous: bool = False

    @property
    def flat(self) -> tuple[int, ...]:
        return tuple(i * self.L + b for i, b in enumerate(self.bands))


@dataclass(frozen=True)
class EstimationResult:
    """Unordered per-source estimates from one pipeline run."""

    algorithm: str
    phi: np.ndarray
    band: np.ndarray
    f_residual: np.ndarray
    f: np.ndarray
    theta: np.ndarray

    @property
    def n_sources(self) -> int:
        return self.phi.size


def sample_covariance(X: np.ndarray) -> np.ndarray:
    """R = X X^H / N, symmetrized so it is Hermitian to machine precision."""
    X = np.asarray(X)
    R = X @ X.conj().T / X.shape[1]
    return 0.5 * (R + R.conj().T)


def decompose(R: np.ndarray, K: int) -> SubspaceDecomposition:
    """Split the dominant-K eigenvectors (signal) from the rest (noise)."""
    rows = R.shape[0]
    if not 0 < K < rows:
        raise ConfigError(f"need 0 < K < {rows}, got K={K}")
    eigvals, vecs = np.linalg.eigh(R)
    eigvals = eigvals[::-1]
    vecs = vecs[:, ::-1]
    weak = bool(eigvals[K] > 0 and eigvals[K - 1] < 2.0 * eigvals[K])
    return SubspaceDecomposition(
        R=R, eigvals=eigvals, U_S=vecs[:, :K], U_N=vecs[:, K:],
        weak_separation=weak,
    )


def default_phase_grid(step: float = 1e-3) -> np.ndarray:
    """Uniform grid over (-pi, pi]; the phase axis is periodic."""
    n = int(np.ceil(2.0 * np.pi / step))
    return -np.pi + (2.0 * np.pi / n) * np.arange(1, n + 1)


def _local_maxima(values: np.ndarray) -> np.ndarray:
    """Indices of strict circular local maxima."""
    left = np.roll(values, 1)
    right = np.roll(values, -1)
    return np.nonzero((values > left) & (values > right))[0]


def _refine_phase(cost, grid: np.ndarray, idx: int) -> float:
    """Minimize the continuous noise-subspace cost inside the grid cell pair
    around `idx` (periodic in phi)."""
    step = grid[1] - grid[0]
    center = grid[idx]
    res = minimize_scalar(
        lambda phi: cost(center + phi),
        bounds=(-step, step),
        method="bounded",
        options={"xatol": 1e-12},
    )
    phi = center + res.x
    # wrap back into (-pi, pi]
    return float(np.angle(np.exp(1j * phi))) if abs(phi) > np.pi else float(phi)


def music_spatial(Q: np.ndarray, K: int, grid: np.ndarray | None = None) -> np.ndarray:
    """Spatial-phase MUSIC on the sensor view Q; returns K refined phases."""
    M = Q.shape[0]
    if K >= M:
        raise ConfigError(f"spatial MUSIC needs K < M, got K={K}, M={M}")
    if grid is None:
        grid = default_phase_grid()
    dec = decompose(sample_covariance(Q), K)
    U_N = dec.U_N
    A = np.exp(-1j * np.outer(np.arange(M), grid))
    denom = np.sum(np.abs(U_N.conj().T @ A) ** 2, axis=0)
    peaks = _local_maxima(-denom)
    if peaks.size < K:
        raise PeakCountError(
            f"found {peaks.size} spatial-spectrum peaks, need {K}",
            found=int(peaks.size), wanted=K, step="music_spatial",
        )
    best = peaks[np.argsort(denom[peaks])[:K]]

    def cost_at(phi):
        a = spatial_steering(phi, M)
        return float(np.sum(np.abs(U_N.conj().T @ a) ** 2))

    phis = np.array([_refine_phase(cost_at, grid, i) for i in best])
    return np.sort(phis)


def ls_solve(mat: np.ndarray, obs: np.ndarray) -> np.ndarray:
    """Pseudo-inverse solution mat^+ obs; rejects near-singular systems."""
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] < mat.shape[1]:
        raise ConfigError(f"system matrix must be tall, got shape {mat.shape}")
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    if s[-1] == 0.0 or s[0] / s[-1] > COND_LIMIT:
        raise RankDeficiencyError(
            f"system matrix condition number exceeds {COND_LIMIT:.0e} "
            "(duplicated supports or coincident sources)",
            step="ls_solve",
        )
    return vh.conj().T @ ((u.conj().T @ obs) / s[:, None])


def ctf_support(Y1: np.ndarray, B: np.ndarray, K: int) -> tuple[int, ...]:
    """Band support of the branch view via the covariance CTF reduction.

    The sample covariance is factored as V V^H through its eigendecomposition
    (numerically positive eigenvalues only) and the resulting multiple
    measurement vector system B U = V is solved for a row-sparse U by
    simultaneous orthogonal matching pursuit over the columns of B.
    """
    if K > B.shape[0] - 1:
        raise ConfigError(f"CTF needs K <= P-1, got K={K}, P={B.shape[0]}")
    R = sample_covariance(Y1)
    eigvals, vecs = np.linalg.eigh(R)
    keep = eigvals > max(eigvals[-1], 0.0) * 1e-12
    if not np.any(keep):
        raise EmptySupportError("covariance frame has no energy", step="ctf_support")
    V = vecs[:, keep] * np.sqrt(eigvals[keep])

    v_norm = np.linalg.norm(V)
    selected: list[int] = []
    residual = V
    for it in range(K):
        corr = np.linalg.norm(B.conj().T @ residual, axis=1)
        corr[selected] = -1.0
        atom = int(np.argmax(corr))
        if it == 0 and corr[atom] <= v_norm * 1e-12:
            raise EmptySupportError(
                "strongest atom correlation below the noise floor",
                step="ctf_support",
            )
        selected.append(atom)
        coef, *_ = np.linalg.lstsq(B[:, selected], V, rcond=None)
        residual = V - B[:, selected] @ coef
        if np.linalg.norm(residual) < CTF_RESIDUAL_TOL * v_norm:
            break
    return tuple(sorted(_improve_support(B, V, selected)))


def _improve_support(B: np.ndarray, V: np.ndarray, selected: list[int],
                     max_passes: int = 3) -> list[int]:
    """Greedy pursuit is not exact for coherent dictionaries; polish the
    support by single-atom swaps while they lower the joint residual."""

    def resid(cols):
        coef, *_ = np.linalg.lstsq(B[:, cols], V, rcond=None)
        return float(np.linalg.norm(V - B[:, cols] @ coef))

    best = resid(selected)
    for _ in range(max_passes):
        improved = False
        for i in range(len(selected)):
            for cand in range(B.shape[1]):
                if cand in selected:
                    continue
                trial = selected.copy()
                trial[i] = cand
                r = resid(trial)
                if r < best * (1.0 - 1e-12):
                    selected, best = trial, r
                    improved = True
        if not improved:
            break
    return selected


def pair_supports(Z: np.ndarray, X_omega: np.ndarray, omega, L: int) -> JointSupport:
    """Assign each source row of Z a band from omega by cross-correlation."""
    omega = tuple(omega)
    N = Z.shape[1]
    R = np.abs(Z @ X_omega.conj().T) / N
    ambiguous = False
    bands = []
    for i in range(R.shape[0]):
        order = np.argsort(R[i])[::-1]
        bands.append(omega[int(order[0])])
        if order.size > 1 and R[i, order[0]] < PAIRING_AMBIGUITY_RATIO * R[i, order[1]]:
            ambiguous = True
    if ambiguous:
        warnings.warn(
            "pairing confidence low: top cross-correlation entries within "
            f"{PAIRING_AMBIGUITY_RATIO}x of the runner-up",
            stacklevel=2,
        )
    return JointSupport(bands=tuple(bands), L=L, ambiguous=ambiguous)


def residual_frequency(x: np.ndarray, f_s: float) -> float:
    """In-band frequency of a (near) single tone, in [0, f_s).

    Coarse estimate from the phase of the lag-1 autocorrelation (exact for a
    clean tone, wrap-free over [0, f_s)), then a derotated refinement using
    parabolically weighted phase increments, which is efficient in noise.
    """
    x = np.asarray(x)
    if x.size < 2:
        raise ConfigError("need at least 2 samples for a frequency estimate")
    if not np.any(x):
        raise EstimationError("zero sequence has no frequency",
                              step="residual_frequency")
    prods = x[1:] * np.conj(x[:-1])
    z = np.sum(prods)
    coarse = np.angle(z) / (2.0 * np.pi)  # cycles per snapshot, in (-0.5, 0.5]
    # derotate so the remaining increments sit near zero phase
    n = x.size
    incr = np.angle(prods * np.exp(-2j * np.pi * coarse))
    t = np.arange(n - 1)
    w = 1.0 - ((t - (n / 2.0 - 1.0)) / (n / 2.0)) ** 2
    w /= np.sum(w)
    fine = coarse + np.sum(w * incr) / (2.0 * np.pi)
    return float((fine % 1.0) * f_s)


def unfold_frequency(band: int, f_res: float, pattern) -> float:
    """Map a band index and in-band residual back to the carrier frequency."""
    f_slice = pattern.f_N / pattern.L
    if not 0 <= band < pattern.L:
        raise ConfigError(f"band index {band} out of [0, {pattern.L - 1}]")
    if not 0.0 <= f_res < f_slice:
        raise ConfigError(f"residual {f_res} outside [0, {f_slice})")
    return band * f_slice + f_res


def _tagged(step: str, exc: EstimationError) -> EstimationError:
    if exc.step is None:
        exc.step = step
    return exc


def _finish(W: np.ndarray, phis: np.ndarray, bands, config, algorithm: str,
            full_structure: bool = False) -> EstimationResult:
    """Steps shared by every pipeline: LS reconstruction, residual frequency,
    unfolding, and the phase-to-DOA conversion."""
    geom, pattern = config.geom, config.pattern
    bands = np.asarray(bands, dtype=int)
    builder = build_G_selected if full_structure else build_H_selected
    mat = builder(phis, bands, geom, pattern)
    try:
        S = ls_solve(mat, W)
    except EstimationError as exc:
        raise _tagged("ls_solve_joint", exc)
    try:
        f_res = np.array([residual_frequency(row, pattern.f_s) for row in S])
    except EstimationError as exc:
        raise _tagged("residual_frequency", exc)
    f = np.array([unfold_frequency(b, r, pattern) for b, r in zip(bands, f_res)])
    theta = np.empty_like(f)
    for k in range(f.size):
        try:
            theta[k] = doa_from_phase(phis[k], f[k], geom)
        except SpatialAliasingError:
            theta[k] = np.nan  # phase/frequency stay valid; DOA undefined here
    return EstimationResult(
        algorithm=algorithm, phi=np.asarray(phis, dtype=float), band=bands,
        f_residual=f_res, f=f, theta=theta,
    )


def jdfpi(snapshots, config, grid: np.ndarray | None = None) -> EstimationResult:
    """Individual-estimates pipeline: spatial MUSIC + CTF support + pairing."""
    K = config.n_sources
    pattern = config.pattern
    if K > pattern.P - 1:
        raise ConfigError(f"JDFPI needs K <= P-1, got K={K}, P={pattern.P}")
    try:
        phis = music_spatial(snapshots.Q, K, grid)
    except EstimationError as exc:
        raise _tagged("music_spatial", exc)
    A = build_A(phis, config.geom.M)
    try:
        Z = ls_solve(A, snapshots.Q)
    except EstimationError as exc:
        raise _tagged("ls_solve_spatial", exc)
    B = build_B(pattern)
    try:
        omega = ctf_support(snapshots.Y1, B, K)
    except EstimationError as exc:
        raise _tagged("ctf_support", exc)
    try:
        X_omega = ls_solve(B[:, list(omega)], snapshots.Y1)
    except EstimationError as exc:
        raise _tagged("ls_solve_bands", exc)
    support = pair_supports(Z, X_omega, omega, pattern.L)
    return _finish(snapshots.W, phis, support.bands, config, "JDFPI")


def _joint_peaks(spectrum: np.ndarray, grid: np.ndarray, K: int, step: str):
    """Top-K (band, grid index) peaks of a bands x grid pseudo-spectrum, with
    per-band non-maximum suppression."""
    n_grid = grid.size
    candidates = []
    for l in range(spectrum.shape[0]):
        for idx in _local_maxima(spectrum[l]):
            candidates.append((spectrum[l, idx], l, int(idx)))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    picks: list[tuple[int, int]] = []
    for _, l, idx in candidates:
        near = any(
            pl == l and min(abs(pi - idx), n_grid - abs(pi - idx)) <= NMS_RADIUS
            for pl, pi in picks
        )
        if near:
            continue
        picks.append((l, idx))
        if len(picks) == K:
            break
    if len(picks) < K:
        raise PeakCountError(
            f"found {len(picks)} joint-spectrum peaks, need {K}",
            found=len(picks), wanted=K, step=step,
        )
    return picks


def _dedupe_picks(pairs, grid_step: float, K: int, step: str):
    """Collapse refined picks that landed on the same (phi, band) point."""
    kept = []
    for phi, band in pairs:
        dup = any(b == band and abs(p - phi) < 0.5 * grid_step for p, b in kept)
        if not dup:
            kept.append((phi, band))
    if len(kept) < K:
        raise PeakCountError(
            f"only {len(kept)} distinct (phi, band) picks after refinement",
            found=len(kept), wanted=K, step=step,
        )
    return kept


def jdfsdpj(snapshots, config, grid: np.ndarray | None = None) -> EstimationResult:
    """Joint 2-D subspace search over (phi, band) on the simplified output."""
    K = config.n_sources
    geom, pattern = config.geom, config.pattern
    M, P, L = geom.M, pattern.P, pattern.L
    if grid is None:
        grid = default_phase_grid()
    dec = decompose(sample_covariance(snapshots.W), K)
    U_N = dec.U_N
    B = build_B(pattern)

    # a_l(phi) = [B[:, l]; a_m(phi) * B[0, l], m = 2..M]: the sensor-1 block is
    # constant in phi, so one (M-1)-row projection serves every band.
    E_grid = np.exp(-1j * np.outer(np.arange(1, M), grid))
    S_mat = U_N[P:].conj().T @ E_grid
    head = U_N[:P].conj().T @ B  # column l pairs with band l
    spectrum = np.empty((L, grid.size))
    for l in range(L):
        V = head[:, l][:, None] + B[0, l] * S_mat
        spectrum[l] = 1.0 / np.sum(np.abs(V) ** 2, axis=0)

    picks = _joint_peaks(spectrum, grid, K, step="jdfsdpj_search")

    def cost_for(band):
        def cost(phi):
            a = joint_steering(phi, band, geom, pattern)
            return float(np.sum(np.abs(U_N.conj().T @ a) ** 2))
        return cost

    refined = [(_refine_phase(cost_for(l), grid, idx), l) for l, idx in picks]
    refined = _dedupe_picks(refined, grid[1] - grid[0], K, step="jdfsdpj_search")
    phis = np.array([p for p, _ in refined])
    bands = [b for _, b in refined]
    return _finish(snapshots.W, phis, bands, config, "JDFSDPJ")


def jdfsd_full(Y_full: np.ndarray, config, grid: np.ndarray | None = None) -> EstimationResult:
    """Full-structure baseline: the same joint search on all M*P channels."""
    K = config.n_sources
    geom, pattern = config.geom, config.pattern
    M, P, L = geom.M, pattern.P, pattern.L
    if grid is None:
        grid = default_phase_grid()
    dec = decompose(sample_covariance(Y_full), K)
    U_N = dec.U_N
    B = build_B(pattern)

    A_grid = np.exp(-1j * np.outer(np.arange(M), grid))
    U3 = U_N.conj().reshape(M, P, -1)
    spectrum = np.empty((L, grid.size))
    for l in range(L):
        T = np.einsum("mpr,p->rm", U3, B[:, l])
        spectrum[l] = 1.0 / np.sum(np.abs(T @ A_grid) ** 2, axis=0)

    picks = _joint_peaks(spectrum, grid, K, step="jdfsd_full_search")

    def cost_for(band):
        def cost(phi):
            g = full_steering(phi, band, geom, pattern)
            return float(np.sum(np.abs(U_N.conj().T @ g) ** 2))
        return cost

    refined = [(_refine_phase(cost_for(l), grid, idx), l) for l, idx in picks]
    refined = _dedupe_picks(refined, grid[1] - grid[0], K, step="jdfsd_full_search")
    phis = np.array([p for p, _ in refined])
    bands = [b for _, b in refined]
    return _finish(Y_full, phis, bands, config, "JDFSD-full", full_structure=True)
