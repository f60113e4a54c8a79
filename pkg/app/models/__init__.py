"""Network, experiment and HTTP data models"""
