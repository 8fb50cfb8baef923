"""Schemas tests package."""