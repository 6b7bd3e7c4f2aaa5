"""Always-on voting: repeated blockchain elections whose epochs end at
unpredictable times derived from Bitcoin headers through a delay function."""

__version__ = "0.1.0"
