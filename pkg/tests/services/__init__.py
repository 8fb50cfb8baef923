"""Services tests package."""