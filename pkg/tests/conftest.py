import pytest
import torch

from oodgan.config import TrainConfig
from oodgan.corpus import encode_raw
from oodgan.toy import make_toy_task


_criteria: list[tuple[int, str, str, list]] = []


def pytest_configure(config):
    torch.set_num_threads(1)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _criteria.append((marker.args[0], marker.args[1], rep.outcome, list(item.user_properties)))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome, props in sorted(_criteria, key=lambda c: c[0]):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        detail = "; ".join(f"{k}={v}" for k, v in props)
        terminalreporter.write_line(f"criterion {number} {verdict}: {title}" + (f" ({detail})" if detail else ""))


@pytest.fixture(scope="session")
def toy_data():
    raw = make_toy_task(0, n_train=30, n_valid=8, n_test=10, n_test_ood=40)
    return encode_raw(raw, max_len=16)


def small_config(**sections) -> TrainConfig:
    """Tiny networks for fast end-to-end checks."""
    base = {
        "seed": 0,
        "data": {"max_len": 16},
        "generator": {"emb_dim": 16, "hidden_dim": 32, "batch_size": 32, "pretrain_epochs": 3},
        "discriminator": {"emb_dim": 16, "hidden_dim": 16, "batch_size": 32, "pretrain_epochs": 1},
        "classifier": {"emb_dim": 16, "num_filters": 8, "dense_dim": 16, "lr": 1e-3, "batch_size": 32, "max_epochs": 3},
        "adversarial": {"epochs": 1, "batch_size": 32, "rollouts": 2, "eval_every": 0},
        "detector": {"lr": 1e-3, "batch_size": 32, "max_epochs": 2},
    }
    for name, values in sections.items():
        if isinstance(values, dict):
            base.setdefault(name, {}).update(values)
        else:
            base[name] = values
    return TrainConfig.from_dict(base)
