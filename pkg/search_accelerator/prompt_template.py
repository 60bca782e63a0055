import re
from importlib import resources

_VARIABLE = re.compile(r"\{\{(.*?)\}\}")


class PromptTemplate:
    def __init__(self, text):
        """
        Initialize a PromptTemplate with the given text.

        Args:
            text (str): Template text containing ``{{variable}}`` placeholders.
        """
        self.text = text

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls(f.read())

    @classmethod
    def default(cls):
        """The built-in instruction template for generating alternate queries."""
        text = resources.files("search_accelerator").joinpath("prompts/alternator.txt").read_text(encoding="utf-8")
        return cls(text)

    def get_variables(self):
        """
        Get all variables in the template text.

        Returns:
            list: Variable names in order of first appearance.
        """
        variables = []
        for match in _VARIABLE.findall(self.text):
            name = match.strip()
            if '"' not in name and name not in variables:
                variables.append(name)
        return variables

    def compile(self, **kwargs):
        """
        Compile the template by replacing variables with provided values.

        Args:
            **kwargs: Keyword arguments where keys are variable names and values are their replacements.

        Returns:
            str: The compiled prompt.

        Raises:
            ValueError: If there are missing or extra variables, or if a value is not a string.
        """
        required_variables = self.get_variables()
        provided_variables = set(kwargs.keys())

        missing_variables = [item for item in required_variables if item not in provided_variables]
        extra_variables = sorted(item for item in provided_variables if item not in required_variables)

        if missing_variables:
            raise ValueError(f"Missing variable(s): {', '.join(missing_variables)}")
        if extra_variables:
            raise ValueError(f"Extra variable(s) provided: {', '.join(extra_variables)}")

        for key, value in kwargs.items():
            if not isinstance(value, str):
                raise ValueError(f"Value for variable '{key}' must be a string, not {type(value).__name__}")

        # single pass, so values that contain {{...}} are never re-expanded
        return _VARIABLE.sub(lambda m: kwargs.get(m.group(1).strip(), m.group(0)), self.text)
