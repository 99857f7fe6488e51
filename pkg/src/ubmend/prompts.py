"""Prompt template loading. Templates are editable package data files."""
from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return (resources.files("ubmend") / f"data/prompts/{name}").read_text("utf-8")


def fill(template: str, **values: str) -> str:
    """str.format without brace interpretation inside the values."""
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out
