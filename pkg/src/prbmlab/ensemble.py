"""Seeded sampling of Hermitian PRBM matrices and Brownian increments.

All randomness flows through counter-based Philox streams keyed by
(root_seed, stream_index), so any sample is reproducible bit-for-bit
regardless of worker count or scheduling.
"""

from dataclasses import dataclass

import numpy as np

from .profiles import uniform_profile

ALGORITHM_ID = "philox4x64(numpy)"


@dataclass(frozen=True)
class RngStream:
    """Identifies one reproducible random stream."""

    root_seed: int
    stream_index: tuple = ()
    algorithm_id: str = ALGORITHM_ID

    def child(self, *index):
        return RngStream(self.root_seed, self.stream_index + tuple(int(i) for i in index))

    def generator(self):
        seq = np.random.SeedSequence(entropy=self.root_seed, spawn_key=self.stream_index)
        return np.random.Generator(np.random.Philox(seed=seq))


@dataclass(frozen=True)
class HermitianSample:
    """One Hermitian draw; ``matrix`` is exactly Hermitian with a real diagonal."""

    matrix: np.ndarray
    profile_ref: str
    seed: int
    stream_index: tuple = ()

    @property
    def N(self):
        return self.matrix.shape[0]


def _hermitian_from_variances(kernel0, profile, rng_gen, scale=1.0):
    """Draw H with independent Gaussian entries of variance scale * S_{xy}.

    Diagonal: real N(0, scale*S_xx).  Off-diagonal (x < y): complex with
    independent real/imaginary parts of variance scale*S_xy/2 each, mirrored
    by conjugation.  Fixed draw order: diagonal, then two full real matrices.
    """
    N = profile.N
    diag = rng_gen.standard_normal(N) * np.sqrt(scale * kernel0)
    xr = rng_gen.standard_normal((N, N))
    xi = rng_gen.standard_normal((N, N))
    idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
    sigma = np.sqrt(scale * profile.kernel[idx] / 2.0)
    upper = np.triu((xr + 1j * xi) * sigma, k=1)
    h = upper + upper.conj().T
    h[np.diag_indices(N)] = diag
    return h


def sample_prbm(profile, rng):
    """One PRBM sample with entry variances E|H_xy|^2 = S_xy."""
    g = rng.generator()
    h = _hermitian_from_variances(profile.kernel[0], profile, g)
    return HermitianSample(h, profile.label, rng.root_seed, rng.stream_index)


def sample_mbm_increment(profile, dt, rng):
    """Exact Brownian increment: distributed as sqrt(dt) x unit-time sample."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0:
        return np.zeros((profile.N, profile.N), dtype=complex)
    g = rng.generator()
    return _hermitian_from_variances(profile.kernel[0], profile, g, scale=dt)


def sample_gue(N, rng):
    """GUE sample with unit normalization E|H_xy|^2 = 1/N (semicircle on [-2,2])."""
    prof = uniform_profile(N)
    g = rng.generator()
    h = _hermitian_from_variances(prof.kernel[0], prof, g)
    return HermitianSample(h, "gue", rng.root_seed, rng.stream_index)


def dump_sample(sample, path):
    """Binary dump: row-major complex64 pairs, little-endian."""
    sample.matrix.astype("<c8").tofile(path)


def load_sample_matrix(path, N):
    data = np.fromfile(path, dtype="<c8")
    if data.size != N * N:
        raise ValueError(f"expected {N*N} complex64 values, found {data.size}")
    return data.reshape(N, N).astype(complex)
