"""Serotonin-modulated patience for waypoint navigation, with a seeded park
simulator and an online DQN road follower."""

__version__ = "0.1.0"
