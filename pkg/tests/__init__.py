"""Test package initialization."""