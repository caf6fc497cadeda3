import io
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corpusgen import generate_corpus  # noqa: E402

from bibcorpus import cli  # noqa: E402
from bibcorpus.store import Store  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def run_cli(argv) -> tuple[int, str]:
    """Run the CLI in-process, capturing stdout."""
    out = io.StringIO()
    code = cli.run([str(a) for a in argv], out=out)
    return code, out.getvalue()


def run_pipeline(corpus_dir: Path, store_dir: Path, workers: int = 2) -> None:
    """Ingest, harvest, align, and link the synthetic corpus end to end."""
    for argv in (
        ["ingest", "--store", store_dir, "--dump", corpus_dir / "dump.xml"],
        ["harvest", "--store", store_dir, "--workers", workers,
         "--sidecar", corpus_dir / "sidecar.json",
         "--schedule", corpus_dir / "schedule.json"],
        ["align", "--store", store_dir, "--workers", workers],
        ["citegraph", "--store", store_dir, "build"],
    ):
        code, _ = run_cli(argv)
        assert code == 0, f"pipeline step failed: {argv}"


@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory) -> dict:
    out_dir = tmp_path_factory.mktemp("synth")
    manifest = generate_corpus(out_dir, seed=0, n_pubs=1000)
    manifest["dir"] = out_dir
    return manifest


@pytest.fixture(scope="session")
def built_store_dir(synth_corpus, tmp_path_factory) -> Path:
    store_dir = tmp_path_factory.mktemp("store")
    run_pipeline(synth_corpus["dir"], store_dir, workers=2)
    return store_dir


@pytest.fixture()
def built_store(built_store_dir) -> Store:
    return Store(built_store_dir)
