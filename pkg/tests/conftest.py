import dataclasses

import pytest

from skidcast.data import InspectionRecord, SyntheticConfig, generate_synthetic


def make_record(**kw) -> InspectionRecord:
    base = dict(section_id="S1", climatic_zone=0, depth_in=0.4, drum=1, speed_fpm=70.0, surface_type=0,
                month=3, skid_before=15.0, skid_after=40.0, macro_before_mm=0.6, macro_after_mm=2.2,
                skid_number=35.0, macro_mm=1.8)
    base.update(kw)
    return InspectionRecord(**base)


def section(sid="S1", months=(0, 3, 6, 12, 18), **kw):
    """One section's records with a simple decaying skid number."""
    return [make_record(section_id=sid, month=m, skid_number=40.0 - m, macro_mm=2.2 - 0.05 * m, **kw)
            for m in months]


def with_field(rec, **kw):
    return dataclasses.replace(rec, **kw)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic(SyntheticConfig(n_sections=40), seed=11)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(module.RESULTS):
        terminalreporter.write_line(line)
