"""
Defines a base form class and list fields for validating simulator
configuration, so that every configuration surface (config files and command
options) reports errors the same way.
"""

# Standard Library Imports
import json

# Django Imports
from django import forms
from django.core.exceptions import ValidationError

# Local Imports
from .exceptions import ConfigurationError


class BaseConfigForm(forms.Form):
    """
    A base Form that provides customized, user-friendly error messages.

    All configuration forms in the project should inherit from this class. It
    overrides the default 'required' message for every required field and can
    turn its errors into a single ConfigurationError.
    """
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        for name, field in self.fields.items():
            if field.required:
                field.error_messages['required'] = f"The '{name}' field is required."

    def raise_for_errors(self):
        """
        Raises:
            ConfigurationError: Keyed by field name, if the form is invalid.
        """
        if not self.is_valid():
            raise ConfigurationError({
                field: [str(message) for message in messages]
                for field, messages in self.errors.items()
            })
        return self.cleaned_data


def _parse_sequence(value, field_name):
    """Accepts a list, a JSON list, or a comma-separated string."""
    if isinstance(value, (list, tuple)):
        return list(value)
    if isinstance(value, str):
        text = value.strip()
        if not text:
            return []
        if text.startswith('['):
            try:
                parsed = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"'{field_name}' is not valid JSON: {exc}.")
            if not isinstance(parsed, list):
                raise ValidationError(f"'{field_name}' must be a list.")
            return parsed
        return [item.strip() for item in text.split(',') if item.strip()]
    raise ValidationError(f"'{field_name}' must be a list or a comma-separated string.")


class FloatListField(forms.Field):
    """A list of floats, e.g. ``[0.5, 0.9]`` or ``"0.5,0.9"``."""
    def to_python(self, value):
        if value in self.empty_values:
            return []
        try:
            return [float(item) for item in _parse_sequence(value, self.label or 'value')]
        except (TypeError, ValueError):
            raise ValidationError("Enter a list of numbers.")


class IntegerListField(forms.Field):
    """A list of integers, e.g. ``[0, 1, 2]`` or ``"0,1,2"``."""
    def to_python(self, value):
        if value in self.empty_values:
            return []
        try:
            items = _parse_sequence(value, self.label or 'value')
            numbers = [float(item) for item in items]
        except (TypeError, ValueError):
            raise ValidationError("Enter a list of whole numbers.")
        if any(number != int(number) for number in numbers):
            raise ValidationError("Enter a list of whole numbers.")
        return [int(number) for number in numbers]


class FloatMatrixField(forms.Field):
    """
    A list of equally long float rows, e.g. ``[[0.0, 1.0], [2.0, 3.0]]``.
    A flat list is read as one value per row.
    """
    def to_python(self, value):
        if value in self.empty_values:
            return []
        rows = _parse_sequence(value, self.label or 'value')
        try:
            matrix = [
                [float(x) for x in row] if isinstance(row, (list, tuple)) else [float(row)]
                for row in rows
            ]
        except (TypeError, ValueError):
            raise ValidationError("Enter a list of numeric rows.")
        if len({len(row) for row in matrix}) > 1:
            raise ValidationError("All rows must have the same length.")
        return matrix
