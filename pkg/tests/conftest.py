import pytest

from fedsim.config import ExperimentConfig, generate_data

SMALL = {
    "data": {"num_classes": 3, "dim": 12, "n_train": 240, "n_val": 120, "n_test": 150, "proxy_size": 60,
             "class_separation": 3.0},
    "model": {"latent_dim": 4, "hidden": [16], "generator_hidden": [16]},
    "training": {"total_rounds": 3, "server_steps": 10, "generator_steps": 10, "client_distill_steps": 3},
    "metrics": {"ci_resamples": 50},
}


def small_config(**sections) -> ExperimentConfig:
    raw = {k: dict(v) for k, v in SMALL.items()}
    for section, values in sections.items():
        raw.setdefault(section, {}).update(values)
    return ExperimentConfig.from_dict(raw)


@pytest.fixture(scope="session")
def small_cfg():
    return small_config()


@pytest.fixture(scope="session")
def small_bundle(small_cfg):
    return generate_data(small_cfg)


# acceptance criteria report one PASS/FAIL line each, collected here and printed at the end

ACCEPTANCE: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, name): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, name = marker.args
    details = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    line = f"criterion {number} ({name}): {'PASS' if report.passed else 'FAIL'}"
    line += f" | {details}" if details else ""
    ACCEPTANCE.append(line)
    print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
