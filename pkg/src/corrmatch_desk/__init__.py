"""corrmatch-desk - Semi-ueberwachte Segmentierung mit gelockerter Schwelle und Korrelationsabgleich im Kleinformat."""

__version__ = "0.3.0"
__author__ = "Michael Blaess"
__year__ = "2026"
