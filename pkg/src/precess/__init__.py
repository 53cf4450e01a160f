"""Precession of the line of nodes for heavy tops."""
