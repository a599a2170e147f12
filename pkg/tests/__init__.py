"""
Tests for OrdiStage
"""
