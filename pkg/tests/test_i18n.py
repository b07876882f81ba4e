"""Tests fuer Sprachdateien und Sprachwahl."""

from __future__ import annotations

import json
import re
import string
from pathlib import Path

import pytest

from corrmatch_desk import i18n

PACKAGE = Path(__file__).resolve().parents[1] / "src" / "corrmatch_desk"

_T_CALL = re.compile(r"""\bt\(\s*["']([a-z][a-z_0-9.]*)["']""")
_DOTTED = re.compile(r"""["']([a-z][a-z_0-9]*(?:\.[a-z_0-9]+)+)["']""")


@pytest.fixture(scope="module")
def texts() -> dict[str, dict[str, str]]:
    return {
        lang: json.loads((PACKAGE / "locale" / f"{lang}.json").read_text(encoding="utf-8"))
        for lang in i18n.SUPPORTED_LANGUAGES
    }


@pytest.fixture(scope="module")
def sources() -> dict[str, str]:
    return {p.name: p.read_text(encoding="utf-8") for p in sorted(PACKAGE.rglob("*.py"))}


def _fields(template: str) -> set[str]:
    return {name for _, name, _, _ in string.Formatter().parse(template) if name}


class TestLocaleFiles:
    def test_sprachen_decken_sich(self, texts: dict[str, dict[str, str]]) -> None:
        assert set(texts["de"]) == set(texts["en"])

    def test_texte_sind_nicht_leer(self, texts: dict[str, dict[str, str]]) -> None:
        leer = [f"{lang}:{key}" for lang, table in texts.items() for key, value in table.items() if not value.strip()]
        assert not leer

    def test_platzhalter_gleich(self, texts: dict[str, dict[str, str]]) -> None:
        for key, template in texts["de"].items():
            assert _fields(template) == _fields(texts["en"][key]), key

    def test_code_nutzt_nur_vorhandene_schluessel(
        self, texts: dict[str, dict[str, str]], sources: dict[str, str]
    ) -> None:
        unbekannt = {
            f"{name}: {key}" for name, code in sources.items() for key in _T_CALL.findall(code) if key not in texts["de"]
        }
        assert not unbekannt

    def test_jeder_schluessel_hat_eine_fundstelle(
        self, texts: dict[str, dict[str, str]], sources: dict[str, str]
    ) -> None:
        genutzt = {key for code in sources.values() for key in _DOTTED.findall(code)}
        assert sorted(set(texts["de"]) - genutzt) == []


class TestLookup:
    def test_platzhalter_werden_gefuellt(self) -> None:
        i18n.load_locale("de")
        assert i18n.t("cli.generate.done", count=42, path="daten.cmds") == "42 Proben geschrieben: daten.cmds"

    def test_unbekannter_schluessel_kommt_zurueck(self) -> None:
        i18n.load_locale("de")
        assert i18n.t("gibt.es.nicht") == "gibt.es.nicht"

    def test_fehlender_platzhalter_liefert_die_vorlage(self, texts: dict[str, dict[str, str]]) -> None:
        i18n.load_locale("de")
        assert i18n.t("cli.error.abort", falsch=1) == texts["de"]["cli.error.abort"]

    @pytest.mark.parametrize("lang", i18n.SUPPORTED_LANGUAGES)
    def test_sprache_wird_aktiv(self, lang: str, texts: dict[str, dict[str, str]]) -> None:
        catalog = i18n.load_locale(lang)
        assert i18n.current_language() == lang == catalog.lang
        assert i18n.t("report.title") == texts[lang]["report.title"]

    def test_unbekannte_sprache_wird_englisch(self) -> None:
        assert i18n.load_locale("kl").lang == i18n.DEFAULT_LANGUAGE

    def test_luecken_werden_aus_englisch_ergaenzt(self, monkeypatch: pytest.MonkeyPatch) -> None:
        tables = {"en": {"a.b": "A {x}", "nur.en": "only english"}, "de": {"a.b": "B {x}"}}
        monkeypatch.setattr(i18n, "_read", lambda lang: tables[lang])
        catalog = i18n.load_locale("de")
        assert catalog.text("a.b", x=1) == "B 1"
        assert catalog.text("nur.en") == "only english"


class TestDetection:
    @pytest.mark.parametrize(("value", "expected"), [("en", "en"), ("de", "de"), ("de_DE.UTF-8", "de"), ("EN-us", "en")])
    def test_umgebungsvariable_erzwingt_sprache(
        self, monkeypatch: pytest.MonkeyPatch, value: str, expected: str
    ) -> None:
        monkeypatch.setenv(i18n.LANGUAGE_ENV, value)
        assert i18n.detect_language() == expected

    def test_unbekannte_umgebungssprache_wird_ignoriert(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv(i18n.LANGUAGE_ENV, "fr")
        assert i18n.detect_language() in i18n.SUPPORTED_LANGUAGES

    def test_deutsche_locale(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.delenv(i18n.LANGUAGE_ENV, raising=False)
        monkeypatch.setattr(i18n.locale, "getlocale", lambda: ("de_AT", "UTF-8"))
        assert i18n.detect_language() == "de"

    def test_unlesbare_locale_ergibt_englisch(self, monkeypatch: pytest.MonkeyPatch) -> None:
        def kaputt() -> tuple[str, str]:
            raise ValueError("unknown locale")

        monkeypatch.delenv(i18n.LANGUAGE_ENV, raising=False)
        monkeypatch.delenv("LC_ALL", raising=False)
        monkeypatch.delenv("LANG", raising=False)
        monkeypatch.setattr(i18n.locale, "getlocale", kaputt)
        assert i18n.detect_language() == "en"


@pytest.mark.parametrize(
    "obj", [i18n.Catalog, i18n.Catalog.text, i18n.detect_language, i18n.load_locale, i18n.current_language, i18n.t]
)
def test_oeffentliche_api_ist_dokumentiert(obj: object) -> None:
    assert (getattr(obj, "__doc__", None) or "").strip()
