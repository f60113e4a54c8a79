"""Utility functions and classes"""
