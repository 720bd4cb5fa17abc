import pytest

from video_rts.core import McqaSample, SyntheticVideo


def make_sample(sid="q1", gt="B", n_options=4, evidence=None, difficulty="easy"):
    evidence = evidence if evidence is not None else [None] * 8
    letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"[:n_options]
    return McqaSample(
        id=sid,
        video=SyntheticVideo(f"v-{sid}", tuple(evidence), difficulty),
        question=f"question {sid}?",
        options=tuple((c, f"option {c}") for c in letters),
        gt_answer=gt,
    )


@pytest.fixture
def sample():
    return make_sample()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
