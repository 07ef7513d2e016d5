import csv
import random

import numpy as np
import pytest
from PIL import Image

from toneaudit.fairness_metrics import AFFECTNET_CLASSES

BLUE = (0, 0, 255)

# swatch colour -> (ITA group, H*-L* group), checked in test_cli against a
# scikit-image Lab oracle
SWATCHES = {
    "s01_light.png": ((240, 200, 170), "Light", "Light"),
    "s02_ita_medium.png": ((230, 180, 150), "Medium", "Light"),
    "s03_medium.png": ((200, 150, 120), "Medium", "Medium"),
    "s04_ita_dark.png": ((180, 120, 90), "Dark", "Medium"),
    "s05_brown.png": ((120, 93, 83), "Dark", "Dark"),
    "s06_dark.png": ((110, 80, 65), "Dark", "Dark"),
    "s07_light_rgba.png": ((238, 198, 168), "Light", "Light"),
    "sub/s08_medium.png": ((195, 145, 115), "Medium", "Medium"),
}
EXCLUDED = {
    "x09_gray.png": "low_color",
    "x10_gray_mode_l.png": "low_color",
    "x11_green.png": "insufficient_skin",
    "x12_broken.png": "decode_error",
}


def swatch_image(rgb, h=24, w=32):
    """Skin swatch on the left 3/4, pure blue on the right."""
    img = np.empty((h, w, 3), np.uint8)
    img[:] = BLUE
    img[:, : w * 3 // 4] = rgb
    return img


def write_fixture(root):
    root.mkdir(parents=True, exist_ok=True)
    (root / "sub").mkdir(exist_ok=True)
    for name, (rgb, _, _) in SWATCHES.items():
        img = Image.fromarray(swatch_image(rgb))
        if "rgba" in name:
            img = img.convert("RGBA")
        img.save(root / name)
    Image.fromarray(np.full((24, 32, 3), 128, np.uint8)).save(root / "x09_gray.png")
    Image.fromarray(np.full((24, 32), 90, np.uint8), mode="L").save(root / "x10_gray_mode_l.png")
    Image.fromarray(np.full((24, 32, 3), (0, 255, 0), np.uint8)).save(root / "x11_green.png")
    (root / "x12_broken.png").write_bytes(b"\x89PNG\r\n\x1a\nnot really a png")
    return root


def write_manifest(path, ids, seed=5):
    rng = random.Random(seed)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_path", "true_label", "predicted_label"])
        for sid in ids:
            true = rng.choice(AFFECTNET_CLASSES)
            pred = true if rng.random() < 0.5 else rng.choice(AFFECTNET_CLASSES)
            w.writerow([sid, true, pred])
    return path


@pytest.fixture
def image_dir(tmp_path):
    return write_fixture(tmp_path / "faces")


@pytest.fixture
def manifest(tmp_path):
    return write_manifest(tmp_path / "manifest.csv", sorted(SWATCHES) + sorted(EXCLUDED))


_acceptance_lines = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion label")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        status = "PASS" if report.passed else "FAIL"
        _acceptance_lines.append(f"[{status}] {marker.args[0]}")


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
