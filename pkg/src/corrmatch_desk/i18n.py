"""i18n - Meldungen und Hilfetexte auf Deutsch oder Englisch.

Je Sprache eine flache JSON-Datei unter ``locale/``. Uebersetzt werden nur
Texte fuer Menschen; CSV-Spalten und JSON-Schluessel der Laufergebnisse sind
in jeder Sprache gleich.
"""

from __future__ import annotations

import contextlib
import json
import locale
import logging
import os
from dataclasses import dataclass, field
from functools import cache
from importlib import resources

logger = logging.getLogger(__name__)

SUPPORTED_LANGUAGES = ("de", "en")
DEFAULT_LANGUAGE = "en"
LANGUAGE_ENV = "CORRMATCH_LANG"


@dataclass(frozen=True)
class Catalog:
    """Geladene Texte einer Sprache; fehlende Eintraege kommen aus Englisch."""

    lang: str
    strings: dict[str, str] = field(default_factory=dict)

    def text(self, key: str, **kwargs: object) -> str:
        """Text zu ``key``; ohne Treffer der Schluessel, bei fehlendem Platzhalter die Vorlage."""
        template = self.strings.get(key, key)
        if not kwargs:
            return template
        try:
            return template.format(**kwargs)
        except (KeyError, IndexError):
            return template


@cache
def _read(lang: str) -> dict[str, str]:
    try:
        raw = (resources.files("corrmatch_desk") / "locale" / f"{lang}.json").read_text(encoding="utf-8")
        return dict(json.loads(raw))
    except (OSError, ValueError):
        logger.exception("Sprachdatei '%s' nicht lesbar", lang)
        return {}


def _language_code(value: str) -> str:
    """``de_DE.UTF-8`` -> ``de``."""
    return value.split(".")[0].split("_")[0].split("-")[0].lower()


def detect_language() -> str:
    """Sprache aus ``CORRMATCH_LANG``, sonst aus der System-Locale.

    Deutsch nur bei einer erkennbar deutschsprachigen Umgebung; alles andere,
    auch ein Fehler beim Auslesen, ergibt Englisch.
    """
    forced = _language_code(os.environ.get(LANGUAGE_ENV, ""))
    if forced in SUPPORTED_LANGUAGES:
        return forced
    code = ""
    with contextlib.suppress(ValueError, TypeError):
        code = locale.getlocale()[0] or ""
    code = code or os.environ.get("LC_ALL") or os.environ.get("LANG") or ""
    return "de" if _language_code(code) == "de" else DEFAULT_LANGUAGE


_catalog = Catalog(DEFAULT_LANGUAGE)


def load_locale(lang: str) -> Catalog:
    """Macht ``lang`` zur aktiven Sprache. Unbekannte Sprachen werden Englisch."""
    global _catalog
    if lang not in SUPPORTED_LANGUAGES:
        logger.warning("Sprache '%s' nicht unterstuetzt, verwende '%s'", lang, DEFAULT_LANGUAGE)
        lang = DEFAULT_LANGUAGE
    strings = _read(DEFAULT_LANGUAGE) | _read(lang) if lang != DEFAULT_LANGUAGE else _read(lang)
    _catalog = Catalog(lang, dict(strings))
    return _catalog


def current_language() -> str:
    """Kuerzel der aktiven Sprache, z.B. ``de``."""
    return _catalog.lang


def t(key: str, **kwargs: object) -> str:
    """Text zu ``key`` mit eingesetzten Platzhaltern.

    Ein unbekannter Schluessel kommt unveraendert zurueck, ebenso die Vorlage,
    wenn ein Platzhalter fehlt.
    """
    return _catalog.text(key, **kwargs)
