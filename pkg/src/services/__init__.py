"""Experiment orchestration: configuration, fold execution and the run pipeline"""
