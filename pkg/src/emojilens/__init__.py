"""Gendered emoji-usage analytics."""
