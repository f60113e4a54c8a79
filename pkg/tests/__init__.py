"""Tests for the POPS routing simulator"""
