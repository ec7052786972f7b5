import cv2
import numpy as np
import pytest

from rainhaze.scene_io import ClearImage, DepthMap

_acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _acceptance[marker.args[0]] = (report.outcome, doc, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        outcome, doc, duration = _acceptance[n]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {n}: {doc} ({duration:.2f}s)")


def smooth_image(h, w, rng):
    """Random low-frequency RGB image in [0, 1]."""
    coarse = rng.uniform(0, 1, (max(2, h // 16), max(2, w // 16), 3))
    img = cv2.resize(coarse, (w, h), interpolation=cv2.INTER_LINEAR)
    return np.clip(img, 0, 1)


def outdoor_depth(h, w, rng, near=1.0, far=8.0):
    """Ground plane receding toward the top rows plus a few nearer blobs."""
    rows = np.linspace(1.0, 0.0, h)[:, None]
    depth = near + (far - near) * (1.0 - rows) * np.ones((1, w))
    for _ in range(3):
        cy, cx = rng.integers(0, h), rng.integers(0, w)
        r = rng.integers(max(2, h // 10), max(3, h // 4))
        yy, xx = np.ogrid[:h, :w]
        blob = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        depth[blob] = np.minimum(depth[blob], rng.uniform(near, far))
    return depth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def scene(rng):
    h, w = 48, 64
    return ClearImage(smooth_image(h, w, rng)), DepthMap(outdoor_depth(h, w, rng))
