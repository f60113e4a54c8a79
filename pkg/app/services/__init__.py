"""Routing, sorting and experiment services"""
