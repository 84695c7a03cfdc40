"""Compact routing on flat names: landmark/vicinity routing with
name resolution and sloppy-group dissemination, baseline protocols,
and static + discrete-event simulation backends."""

__version__ = "0.1.0"
