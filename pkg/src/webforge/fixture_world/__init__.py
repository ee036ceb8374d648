"""Bundled deterministic fixture sites and the corpus of sample pages."""

from __future__ import annotations

from pathlib import Path

DATA_DIR = Path(__file__).parent / "data"
CORPUS_DIR = DATA_DIR / "corpus"


def corpus_pages() -> list[Path]:
    """Bundled sample pages, sorted by name."""
    return sorted(CORPUS_DIR.glob("*.html"))


def big_fixture_page() -> Path:
    """The large bundled page used for compression benchmarks."""
    return CORPUS_DIR / "bigpage.html"
