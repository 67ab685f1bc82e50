import numpy as np
import pytest

from senres.dataset.ucihar import SIGNALS


def write_ucihar(root, windows_per_part=(3, 2), seed=0):
    """Write a miniature UCI-HAR tree; returns the (N, 128, 6) arrays per partition."""
    rng = np.random.default_rng(seed)
    out = {}
    for part, n in zip(("train", "test"), windows_per_part):
        sig_dir = root / part / "Inertial Signals"
        sig_dir.mkdir(parents=True)
        data = np.round(rng.standard_normal((n, 128, 9)), 6)
        for j, name in enumerate(SIGNALS + ("body_acc_x", "body_acc_y", "body_acc_z")):
            lines = [" ".join(f"{v: .7e}" for v in row) for row in data[:, :, j]]
            (sig_dir / f"{name}_{part}.txt").write_text("\n".join(lines) + "\n")
        labels = rng.integers(1, 7, n)
        (root / part / f"y_{part}.txt").write_text("".join(f"{v}\n" for v in labels))
        (root / part / f"subject_{part}.txt").write_text("".join(f"{v}\n" for v in rng.integers(1, 31, n)))
        out[part] = (data[:, :, :6], labels)
    return out


@pytest.fixture
def ucihar_dir(tmp_path):
    root = tmp_path / "UCI HAR Dataset"
    arrays = write_ucihar(root)
    return root, arrays


# One line per acceptance criterion, echoed in the terminal summary so the
# verdicts are visible even when pytest captures output.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
