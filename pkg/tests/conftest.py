"""Shared fixtures: seeded randomness, homography factories, tiny sequences."""

import numpy as np
import pytest

from camoflow.geometry import Correspondences, apply_homography, normalized_grid
from camoflow.synthgen import SpriteConfig, SynthConfig, generate_sequence

#: Normalized frame corners, TL TR BR BL.
CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Recorder emitting one PASS/FAIL line per acceptance criterion."""

    def record(criterion: int, passed: bool, detail: str):
        verdict = "PASS" if passed else "FAIL"
        request.config._acceptance_lines.append(
            f"[criterion {criterion}] {verdict} - {detail}"
        )

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def make_homography():
    """Factory for well-conditioned random homographies.

    Jitters the four normalized corners and solves the exact four-point
    map, which keeps the result safely away from degeneracy.
    """
    from camoflow.synthgen import quad_to_homography

    def make(rng, magnitude: float = 0.2) -> np.ndarray:
        for _ in range(100):
            jittered = CORNERS + rng.uniform(-magnitude, magnitude, size=(4, 2))
            try:
                return quad_to_homography(CORNERS, jittered)
            except Exception:
                continue
        raise RuntimeError("could not draw a random homography")

    return make


@pytest.fixture
def make_grid_correspondences():
    """Exact grid correspondences under a known homography."""

    def make(h, m: int = 16, n: int = 16, width: int = 256, height: int = 256):
        src = normalized_grid(width, height, m, n)
        return Correspondences(src, apply_homography(h, src))

    return make


@pytest.fixture(scope="session")
def short_sequence():
    """Small ground-truthed sequence reused across test modules."""
    cfg = SynthConfig(
        length=6,
        seed=11,
        frame_size=(192, 192),
        sprite=SpriteConfig(size=34.0, velocity=(3.5, 2.0), start=(70.0, 80.0)),
    )
    return generate_sequence(cfg)


@pytest.fixture(scope="session")
def sprite_pair():
    """One 256x256 frame pair with a moving sprite and exact ground truth."""
    cfg = SynthConfig(
        length=2,
        seed=3,
        sprite=SpriteConfig(size=60.0, velocity=(4.0, 3.0)),
    )
    return generate_sequence(cfg)
