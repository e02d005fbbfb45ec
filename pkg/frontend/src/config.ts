/** Console session settings: cloud base URL + operator token.
 *
 * Persisted in localStorage so a reload keeps the session; the token
 * never leaves the browser except as the Authorization header.
 */

export interface ConsoleConfig {
  baseUrl: string;
  token: string;
}

const KEY = "gridgate-console-config";

export function loadConfig(): ConsoleConfig | null {
  try {
    const raw = localStorage.getItem(KEY);
    if (!raw) {
      return null;
    }
    const parsed = JSON.parse(raw) as ConsoleConfig;
    if (!parsed.baseUrl || !parsed.token) {
      return null;
    }
    return parsed;
  } catch {
    return null;
  }
}

export function saveConfig(config: ConsoleConfig): void {
  localStorage.setItem(KEY, JSON.stringify(config));
}

export function clearConfig(): void {
  localStorage.removeItem(KEY);
}
