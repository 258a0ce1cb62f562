"""Prompt templates, stored as text files with ``${name}`` placeholders.

Templates are data, not code: they live under ``prosemill/templates/`` and
are addressed by their file stem (the template id). The id travels inside
every :class:`~prosemill.gateway.ChatRequest` so response caches and mock
scripts can key on it.
"""

from __future__ import annotations

from importlib import resources
from string import Template

from .errors import ConfigError

_cache: dict[str, Template] = {}


def _template_dir():
    return resources.files("prosemill") / "templates"


def available() -> list[str]:
    """All shipped template ids, sorted."""
    names = []
    for entry in _template_dir().iterdir():
        if entry.name.endswith(".txt"):
            names.append(entry.name[: -len(".txt")])
    return sorted(names)


def load(template_id: str) -> Template:
    tpl = _cache.get(template_id)
    if tpl is None:
        path = _template_dir() / f"{template_id}.txt"
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ConfigError(f"unknown template id {template_id!r}") from None
        tpl = Template(text)
        _cache[template_id] = tpl
    return tpl


def render(template_id: str, **values: str) -> str:
    """Substitute every placeholder; missing names are an error."""
    try:
        return load(template_id).substitute(values)
    except KeyError as exc:
        raise ConfigError(
            f"template {template_id!r} needs placeholder {exc.args[0]!r}"
        ) from None
