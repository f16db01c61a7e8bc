"""Desk-scale demos: constrained TSP, partial matching, portfolio allocation."""
