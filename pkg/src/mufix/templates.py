"""Prompt templates loaded from text files.

Templates live under mufix/templates/*.txt and use str.format placeholders
such as {spec}, {tests}, {understanding}, and {mismatches}. An override
directory can shadow any template by name, which lets experiments swap
prompt wording without code changes. Literal braces in a template must be
doubled; substituted values may contain braces freely.
"""

from __future__ import annotations

import os
from importlib import resources

from .errors import FormatError, IoError


class _Strict(dict):
    def __missing__(self, key):
        raise KeyError(key)


class TemplateSet:
    """Named prompt templates with optional directory overrides."""

    def __init__(self, override_dir: str | None = None):
        if override_dir is not None and not os.path.isdir(override_dir):
            raise IoError(f"template override directory not found: {override_dir}")
        self.override_dir = override_dir
        self._cache: dict[str, str] = {}

    def text(self, name: str) -> str:
        if name in self._cache:
            return self._cache[name]
        if self.override_dir is not None:
            candidate = os.path.join(self.override_dir, f"{name}.txt")
            if os.path.isfile(candidate):
                with open(candidate, encoding="utf-8") as fh:
                    self._cache[name] = fh.read()
                return self._cache[name]
        try:
            packaged = resources.files("mufix").joinpath("templates", f"{name}.txt")
            self._cache[name] = packaged.read_text(encoding="utf-8")
        except (FileNotFoundError, OSError):
            raise IoError(f"no template named {name!r}")
        return self._cache[name]

    def render(self, name: str, **values: str) -> str:
        template = self.text(name)
        try:
            return template.format_map(_Strict(values))
        except KeyError as exc:
            raise FormatError(f"template {name!r}: no value for placeholder {exc}")
        except (IndexError, ValueError) as exc:
            raise FormatError(f"template {name!r}: bad placeholder syntax ({exc})")


def user_message(content: str) -> list[dict]:
    """Single-turn prompt shape used for every chat call."""
    return [{"role": "user", "content": content}]
