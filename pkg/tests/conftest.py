import sys

import pytest

from vfr.datagen.demo import write_assets
from vfr.datagen.generate import GeneratorConfig


@pytest.fixture(scope="session")
def latin_assets(tmp_path_factory):
    return write_assets(tmp_path_factory.mktemp("latin"), "latin", per_type=4)


@pytest.fixture(scope="session")
def persian_assets(tmp_path_factory):
    return write_assets(tmp_path_factory.mktemp("persian"), "persian", per_type=4)


def make_config(assets, **kw) -> GeneratorConfig:
    base = dict(seed=7, fonts_dir=str(assets["fonts_dir"]), lines_path=str(assets["lines_path"]),
                words_path=str(assets["words_path"]), letters_path=str(assets["letters_path"]),
                backgrounds_dir=str(assets["backgrounds_dir"]))
    base.update(kw)
    return GeneratorConfig(**base)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, title, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
