"""Shipped demo circuits and noise models."""

from pathlib import Path

_HERE = Path(__file__).parent


def list_demos() -> list[str]:
    return sorted(p.name for p in _HERE.iterdir() if p.suffix in (".circ", ".noise"))


def demo_path(name: str) -> Path:
    path = _HERE / name
    if not path.is_file():
        raise FileNotFoundError(f"no demo '{name}'; available: {', '.join(list_demos())}")
    return path
