"""
regflow CLI - Entry point.

This is a simple wrapper that calls the main CLI application.
"""
from regflow.main import app

if __name__ == "__main__":
    app()
