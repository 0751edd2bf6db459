import numpy as np
import pytest

from reflectkit.frames import FrameSequence


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def checkerboard(h, w, cell=8, lo=0.1, hi=0.9, seed=0):
    """Random-gray checkerboard; corner-rich and aperiodic."""
    gen = np.random.default_rng(seed)
    ch = (h + cell - 1) // cell
    cw = (w + cell - 1) // cell
    cells = gen.uniform(lo, hi, size=(ch, cw))
    return np.kron(cells, np.ones((cell, cell)))[:h, :w]


def smooth_noise(h, w, sigma=3.0, seed=0, lo=0.1, hi=0.9):
    from scipy import ndimage
    gen = np.random.default_rng(seed)
    field = ndimage.gaussian_filter(gen.random((h, w)), sigma, mode="wrap")
    field -= field.min()
    field /= max(field.max(), 1e-12)
    return lo + (hi - lo) * field


def translate_stack(base, n, vx, vy, h, w, x0, y0):
    """n crops of base; the content moves by (+vx, +vy) px per frame."""
    frames = []
    for t in range(n):
        ox = int(round(x0 - t * vx))
        oy = int(round(y0 - t * vy))
        frames.append(base[oy:oy + h, ox:ox + w])
    return np.stack(frames)


@pytest.fixture
def tiny_sequence():
    data = np.linspace(0.0, 1.0, 2 * 6 * 6).reshape(2, 6, 6)
    return FrameSequence(data)
